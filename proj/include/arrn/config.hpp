// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "arrn/skeleton.hpp"

namespace arrn {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Architecture and training hyperparameters. The JSON keys match the field names.
struct ModelConfig {
  std::size_t J = 5;    // joints per skeleton
  std::size_t T = 8;    // frames after length fixing
  std::size_t M = 16;   // embedding / RRN state width
  std::size_t E = 3;    // message-passing iterations
  std::size_t H = 2;    // LSTM layers
  std::size_t A = 256;  // attention reduction width
  std::vector<std::size_t> layer_widths{32, 32};
  std::size_t K = 2;  // classes
  double alpha = 0.5;
  double beta = 0.5;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  std::size_t plateau_patience = 5;
  std::size_t batch_size = 8;
  std::size_t epochs = 200;
  std::uint64_t rng_seed = 0;
  std::vector<std::size_t> hip_reference_indices{0};
  bool attention = true;  // false freezes the mask at ones

  /// Throws ConfigError naming the offending field.
  void validate() const;
  DatasetSpec dataset_spec() const { return {J, K, hip_reference_indices}; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Every field except `attention` is required; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& doc);

ModelConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ModelConfig& config);

/// Built-in configurations: "ntu_rgbd", "florence3d", "msraction3d",
/// "gradcheck_tiny", "synthetic_overfit".
ModelConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace arrn
