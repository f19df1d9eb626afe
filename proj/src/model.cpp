// SPDX-License-Identifier: Apache-2.0
#include "arrn/model.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "arrn/random.hpp"

namespace arrn {

using nlohmann::json;

std::string_view to_string(StreamKind kind) { return kind == StreamKind::joint ? "joint" : "line"; }

std::vector<Parameter*> StreamParams::parameters() {
  std::vector<Parameter*> out;
  for_each_parameter([&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<Parameter*> StreamParams::trainable_parameters() {
  std::vector<Parameter*> out;
  for_each_parameter([&](Parameter& p) {
    if (p.trainable) out.push_back(&p);
  });
  return out;
}

std::size_t StreamParams::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const Parameter& p) { n += p.value.size(); });
  return n;
}

std::size_t stream_input_dim(StreamKind kind, std::size_t joints) {
  return kind == StreamKind::joint ? 3 : 3 * (joints - 1);
}

StreamParams init_stream(StreamKind kind, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  StreamParams p;
  p.kind = kind;
  p.spatial = make_spatial(stream_input_dim(kind, config.J), config.J, config.M, config.A, rng);
  p.spatial.attention.mask.trainable = config.attention;
  p.lstm = make_lstm_stack(config.A, config.layer_widths, rng);
  p.classifier = make_classifier(config.T, config.layer_widths.back(), config.K, rng);
  return p;
}

Tensor stream_input(StreamKind kind, const SkeletonSequence& prepared) {
  return kind == StreamKind::joint ? joint_features(prepared) : line_features(prepared);
}

Var stream_forward(Tape& tape, const StreamParams& params, const ModelConfig& config,
                   const SkeletonSequence& prepared) {
  if (prepared.frames.size() != config.T) {
    throw DimensionError("stream_forward: sequence has " + std::to_string(prepared.frames.size()) +
                         " frames, config T = " + std::to_string(config.T));
  }
  for (const auto& f : prepared.frames) {
    if (f.joint_count() != config.J) {
      throw DimensionError("stream_forward: frame has " + std::to_string(f.joint_count()) +
                           " joints, config J = " + std::to_string(config.J));
    }
  }
  Var inputs = tape.constant(stream_input(params.kind, prepared));
  Var p = spatial_forward(tape, inputs, config.J, params.spatial, config.E);
  Var q = lstm_forward(tape, p, params.lstm);
  return classify(tape, q, params.classifier);
}

Tensor stream_predict(const StreamParams& params, const ModelConfig& config, const SkeletonSequence& prepared) {
  Tape tape;
  return stream_forward(tape, params, config, prepared).value();
}

TwoStreamModel init_model(const ModelConfig& config, bool with_joint, bool with_line) {
  TwoStreamModel m;
  m.config = config;
  if (with_joint) m.joint = init_stream(StreamKind::joint, config, derive_seed(config.rng_seed, {0x1417, 0}));
  if (with_line) m.line = init_stream(StreamKind::line, config, derive_seed(config.rng_seed, {0x1417, 1}));
  return m;
}

// ---------------------------------------------------------------- model file

std::string serialize_model(const TwoStreamModel& model) {
  json streams = json::array();
  json tensors = json::array();
  for (const auto* stream : {&model.joint, &model.line}) {
    if (!stream->has_value()) continue;
    const std::string prefix(to_string((*stream)->kind));
    streams.push_back(prefix);
    (*stream)->for_each_parameter([&](const Parameter& p) {
      tensors.push_back({{"name", prefix + "/" + p.name}, {"shape", p.value.shape()}, {"data", p.value.storage()}});
    });
  }
  json doc = {{"format_version", kModelFormatVersion},
              {"config", config_to_json(model.config)},
              {"streams", std::move(streams)},
              {"tensors", std::move(tensors)}};
  return doc.dump() + "\n";
}

TwoStreamModel deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelLoadError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ModelLoadError("model file: expected a JSON object");
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
    throw ModelLoadError("format_version: missing");
  }
  if (doc["format_version"].get<int>() != kModelFormatVersion) {
    throw ModelLoadError("format_version: expected " + std::to_string(kModelFormatVersion) + ", found " +
                         doc["format_version"].dump());
  }
  if (!doc.contains("config")) throw ModelLoadError("config: missing");
  ModelConfig config;
  try {
    config = config_from_json(doc["config"]);
  } catch (const ConfigError& e) {
    throw ModelLoadError(std::string("config.") + e.what());
  }
  if (!doc.contains("streams") || !doc["streams"].is_array()) throw ModelLoadError("streams: missing");
  bool with_joint = false, with_line = false;
  for (const auto& s : doc["streams"]) {
    if (s == "joint") {
      with_joint = true;
    } else if (s == "line") {
      with_line = true;
    } else {
      throw ModelLoadError("streams: unknown stream " + s.dump());
    }
  }
  if (!with_joint && !with_line) throw ModelLoadError("streams: no stream present");
  if (!doc.contains("tensors") || !doc["tensors"].is_array()) throw ModelLoadError("tensors: missing");

  std::map<std::string, const json*> stored;
  for (const auto& t : doc["tensors"]) {
    if (!t.is_object() || !t.contains("name") || !t["name"].is_string()) {
      throw ModelLoadError("tensors: entry without a name");
    }
    const auto name = t["name"].get<std::string>();
    if (!stored.emplace(name, &t).second) throw ModelLoadError("tensor " + name + ": duplicated");
  }

  TwoStreamModel model = init_model(config, with_joint, with_line);
  std::size_t consumed = 0;
  std::set<std::string> expected;
  for (auto* stream : {&model.joint, &model.line}) {
    if (!stream->has_value()) continue;
    const std::string prefix(to_string((*stream)->kind));
    (*stream)->for_each_parameter([&](Parameter& p) {
      const std::string name = prefix + "/" + p.name;
      expected.insert(name);
      auto it = stored.find(name);
      if (it == stored.end()) throw ModelLoadError("tensor " + name + ": missing");
      const json& t = *it->second;
      Shape shape;
      std::vector<double> data;
      try {
        shape = t.at("shape").get<Shape>();
        data = t.at("data").get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw ModelLoadError("tensor " + name + ": " + e.what());
      }
      if (shape != p.value.shape()) {
        throw ModelLoadError("tensor " + name + ": shape " + shape_to_string(shape) + " inconsistent with config (expected " +
                             shape_to_string(p.value.shape()) + ")");
      }
      if (data.size() != p.value.size()) {
        throw ModelLoadError("tensor " + name + ": " + std::to_string(data.size()) + " values for shape " +
                             shape_to_string(shape));
      }
      p.value = Tensor(std::move(shape), std::move(data));
      if (!p.value.all_finite()) throw ModelLoadError("tensor " + name + ": non-finite value");
      ++consumed;
    });
  }
  if (consumed != stored.size()) {
    for (const auto& [name, _] : stored) {
      if (!expected.contains(name)) throw ModelLoadError("tensor " + name + ": not part of the model");
    }
  }
  return model;
}

void save_model(const std::filesystem::path& path, const TwoStreamModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out << serialize_model(model);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TwoStreamModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelLoadError("cannot open model " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace arrn
