// SPDX-License-Identifier: Apache-2.0
#include "arrn/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace arrn {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("optimizer: expected \"sgd\" or \"adam\", got \"" + std::string(name) + "\"");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(J >= 2, "J: need at least 2 joints");
  require(T >= 1, "T: must be at least 1");
  require(M >= 1, "M: must be at least 1");
  require(E >= 1, "E: must be at least 1");
  require(H >= 1, "H: must be at least 1");
  require(A >= 1, "A: must be at least 1");
  require(K >= 2, "K: need at least 2 classes");
  require(layer_widths.size() == H,
          "layer_widths: has " + std::to_string(layer_widths.size()) + " entries but H = " + std::to_string(H));
  for (auto w : layer_widths) require(w >= 1, "layer_widths: widths must be positive");
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha: must be non-negative");
  require(std::isfinite(beta) && beta >= 0.0, "beta: must be non-negative");
  require(std::abs(alpha + beta - 1.0) <= 1e-12, "alpha, beta: must sum to 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate: must be positive");
  require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, "lr_decay_factor: must lie in (0, 1]");
  require(plateau_patience >= 1, "plateau_patience: must be at least 1");
  require(batch_size >= 1, "batch_size: must be at least 1");
  require(!hip_reference_indices.empty(), "hip_reference_indices: must not be empty");
  for (auto idx : hip_reference_indices) {
    require(idx < J, "hip_reference_indices: index " + std::to_string(idx) + " out of range for J = " +
                         std::to_string(J));
  }
}

json config_to_json(const ModelConfig& c) {
  return json{{"J", c.J},
              {"T", c.T},
              {"M", c.M},
              {"E", c.E},
              {"H", c.H},
              {"A", c.A},
              {"layer_widths", c.layer_widths},
              {"K", c.K},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"optimizer", std::string(to_string(c.optimizer))},
              {"learning_rate", c.learning_rate},
              {"lr_decay_factor", c.lr_decay_factor},
              {"plateau_patience", c.plateau_patience},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"rng_seed", c.rng_seed},
              {"hip_reference_indices", c.hip_reference_indices},
              {"attention", c.attention}};
}

namespace {

template <class T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(std::string(key) + ": missing");
  const json& v = doc.at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(std::string(key) + ": expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(std::string(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError(std::string(key) + ": expected an array");
      for (const auto& x : v) {
        if (!x.is_number_unsigned()) throw ConfigError(std::string(key) + ": expected non-negative integers");
      }
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

ModelConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"J",         "T",          "M",           "E",
                                           "H",         "A",          "layer_widths", "K",
                                           "alpha",     "beta",       "optimizer",   "learning_rate",
                                           "lr_decay_factor", "plateau_patience", "batch_size", "epochs",
                                           "rng_seed",  "hip_reference_indices", "attention"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError(key + ": unknown config field");
  }
  ModelConfig c;
  c.J = field<std::size_t>(doc, "J");
  c.T = field<std::size_t>(doc, "T");
  c.M = field<std::size_t>(doc, "M");
  c.E = field<std::size_t>(doc, "E");
  c.H = field<std::size_t>(doc, "H");
  c.A = field<std::size_t>(doc, "A");
  c.layer_widths = field<std::vector<std::size_t>>(doc, "layer_widths");
  c.K = field<std::size_t>(doc, "K");
  c.alpha = field<double>(doc, "alpha");
  c.beta = field<double>(doc, "beta");
  if (!doc.contains("optimizer") || !doc.at("optimizer").is_string()) {
    throw ConfigError("optimizer: expected \"sgd\" or \"adam\"");
  }
  c.optimizer = parse_optimizer(doc.at("optimizer").get<std::string>());
  c.learning_rate = field<double>(doc, "learning_rate");
  c.lr_decay_factor = field<double>(doc, "lr_decay_factor");
  c.plateau_patience = field<std::size_t>(doc, "plateau_patience");
  c.batch_size = field<std::size_t>(doc, "batch_size");
  c.epochs = field<std::size_t>(doc, "epochs");
  c.rng_seed = field<std::uint64_t>(doc, "rng_seed");
  c.hip_reference_indices = field<std::vector<std::size_t>>(doc, "hip_reference_indices");
  if (doc.contains("attention")) {
    if (!doc.at("attention").is_boolean()) throw ConfigError("attention: expected true or false");
    c.attention = doc.at("attention").get<bool>();
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const std::filesystem::path& path, const ModelConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

ModelConfig preset_config(std::string_view name) {
  ModelConfig c;
  if (name == "ntu_rgbd") {
    // 25 Kinect v2 joints; spine base, both hips, both knees.
    c.J = 25;
    c.K = 60;
    c.T = 100;
    c.M = 50;
    c.E = 5;
    c.H = 3;
    c.A = 256;
    c.layer_widths = {512, 512, 512};
    c.optimizer = OptimizerKind::sgd;
    c.learning_rate = 0.01;
    c.lr_decay_factor = 0.1;
    c.plateau_patience = 5;
    c.batch_size = 8;
    c.epochs = 100;
    c.hip_reference_indices = {0, 12, 13, 16, 17};
  } else if (name == "florence3d") {
    // 15 joints; spine, both hips, both knees.
    c.J = 15;
    c.K = 9;
    c.T = 25;
    c.M = 20;
    c.E = 5;
    c.H = 3;
    c.A = 256;
    c.layer_widths = {256, 256, 512};
    c.optimizer = OptimizerKind::adam;
    c.learning_rate = 1e-3;
    c.epochs = 100;
    c.hip_reference_indices = {2, 9, 10, 12, 13};
  } else if (name == "msraction3d") {
    // 20 Kinect v1 joints, one 8-action subset per model; hip centre, hips, knees.
    c.J = 20;
    c.K = 8;
    c.T = 20;
    c.M = 20;
    c.E = 5;
    c.H = 3;
    c.A = 256;
    c.layer_widths = {256, 256, 512};
    c.optimizer = OptimizerKind::adam;
    c.learning_rate = 1e-3;
    c.epochs = 100;
    c.hip_reference_indices = {0, 12, 13, 16, 17};
  } else if (name == "gradcheck_tiny") {
    c.J = 4;
    c.K = 3;
    c.T = 3;
    c.M = 6;
    c.E = 2;
    c.H = 2;
    c.A = 8;
    c.layer_widths = {8, 8};
    c.epochs = 1;
    c.batch_size = 1;
    c.hip_reference_indices = {0};
  } else if (name == "synthetic_overfit") {
    c.J = 5;
    c.K = 2;
    c.T = 8;
    c.M = 16;
    c.E = 3;
    c.H = 2;
    c.A = 256;
    c.layer_widths = {32, 32};
    c.optimizer = OptimizerKind::adam;
    c.learning_rate = 1e-3;
    c.epochs = 200;
    c.hip_reference_indices = {4};
  } else {
    throw ConfigError("unknown preset \"" + std::string(name) + "\"");
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"ntu_rgbd", "florence3d", "msraction3d", "gradcheck_tiny", "synthetic_overfit"};
}

}  // namespace arrn
