// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "arrn/autodiff.hpp"
#include "arrn/config.hpp"
#include "arrn/skeleton.hpp"
#include "arrn/spatial.hpp"
#include "arrn/temporal.hpp"

namespace arrn {

enum class StreamKind { joint, line };

std::string_view to_string(StreamKind kind);

/// Every parameter of one stream, from embedding to classifier.
struct StreamParams {
  StreamKind kind = StreamKind::joint;
  SpatialParams spatial;
  LstmStackParams lstm;
  ClassifierParams classifier;

  template <class F>
  void for_each_parameter(F&& f) {
    spatial.for_each_parameter(f);
    for (auto& layer : lstm.layers) {
      f(layer.w_input);
      f(layer.w_hidden);
      f(layer.bias);
    }
    f(classifier.layer.weight);
    f(classifier.layer.bias);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<StreamParams*>(this)->for_each_parameter([&](Parameter& p) { f(static_cast<const Parameter&>(p)); });
  }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  std::size_t parameter_count() const;
};

/// Embedding input width: 3 for joints, 3(J-1) for lines.
std::size_t stream_input_dim(StreamKind kind, std::size_t joints);

/// Fresh parameters with fan-in uniform initialization; the mask starts at
/// ones and is frozen when `config.attention` is false.
StreamParams init_stream(StreamKind kind, const ModelConfig& config, std::uint64_t seed);

/// Stream input for a prepared (normalized, length-fixed) sequence.
Tensor stream_input(StreamKind kind, const SkeletonSequence& prepared);

/// Full stream pipeline on the tape. Returns class probabilities [K].
Var stream_forward(Tape& tape, const StreamParams& params, const ModelConfig& config,
                   const SkeletonSequence& prepared);

/// Forward only.
Tensor stream_predict(const StreamParams& params, const ModelConfig& config, const SkeletonSequence& prepared);

/// Joint and/or line stream plus the shared configuration.
struct TwoStreamModel {
  ModelConfig config;
  std::optional<StreamParams> joint;
  std::optional<StreamParams> line;
};

/// Initialization seeds are derived from config.rng_seed per stream.
TwoStreamModel init_model(const ModelConfig& config, bool with_joint = true, bool with_line = true);

class ModelLoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const TwoStreamModel& model);
TwoStreamModel deserialize_model(const std::string& text);
void save_model(const std::filesystem::path& path, const TwoStreamModel& model);
/// Throws ModelLoadError naming the offending field; never returns a partial model.
TwoStreamModel load_model(const std::filesystem::path& path);

}  // namespace arrn
