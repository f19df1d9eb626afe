// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "arrn/autodiff.hpp"
#include "arrn/config.hpp"
#include "arrn/model.hpp"
#include "arrn/skeleton.hpp"

namespace arrn {

/// alpha * y_joint + beta * y_line. Throws ConfigError unless alpha, beta >= 0
/// and alpha + beta = 1.
Tensor fuse(const Tensor& y_joint, const Tensor& y_line, double alpha, double beta);

/// -log(max(y[label], 1e-12)).
double cross_entropy(const Tensor& y, std::size_t label);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const Tensor& y);

void sgd_step(std::span<Parameter* const> params, const GradMap& grads, double learning_rate);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates aligned with the parameter span passed to adam_step.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t steps = 0;
};

void adam_step(std::span<Parameter* const> params, const GradMap& grads, AdamState& state, double learning_rate,
               const AdamSettings& settings = {});

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strict improvement of the monitored accuracy.
class PlateauScheduler {
 public:
  PlateauScheduler(double learning_rate, double factor, std::size_t patience);

  /// Records one epoch's accuracy; returns the learning rate for the next epoch.
  double observe(double accuracy);
  double learning_rate() const { return learning_rate_; }
  std::size_t epochs_without_improvement() const { return stale_; }

 private:
  double learning_rate_;
  double factor_;
  std::size_t patience_;
  std::optional<double> best_;
  std::size_t stale_ = 0;
};

struct StreamEpochStats {
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::optional<StreamEpochStats> joint;
  std::optional<StreamEpochStats> line;
  double fused_train_accuracy = 0.0;
  double fused_val_accuracy = 0.0;
};

inline constexpr int kReportFormatVersion = 1;

struct TrainReport {
  bool joint = false;
  bool line = false;
  std::vector<EpochRecord> epochs;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  bool train_joint = true;
  bool train_line = true;
  /// Worker threads for per-sample passes. Results do not depend on it.
  std::size_t threads = 1;
  /// Called after every epoch; returning false stops training.
  std::function<bool(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TwoStreamModel model;
  TrainReport report;
};

/// Trains the selected streams independently. Deterministic given config.rng_seed.
TrainResult train(const std::vector<SkeletonSequence>& train_set, const std::vector<SkeletonSequence>& val_set,
                  const ModelConfig& config, const TrainOptions& options = {});

struct FusionWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double accuracy = 0.0;
};

/// Grid search over alpha in {0, 0.05, ..., 1}; ties go to the alpha closest
/// to 0.5, then to the smaller alpha.
FusionWeights tune_fusion_weights(std::span<const Tensor> y_joint, std::span<const Tensor> y_line,
                                  std::span<const std::size_t> labels);

struct EvalResult {
  std::optional<double> joint_accuracy;
  std::optional<double> line_accuracy;
  double fused_accuracy = 0.0;
  std::vector<Tensor> joint_probs;
  std::vector<Tensor> line_probs;
  std::vector<Tensor> fused_probs;
  std::vector<std::size_t> labels;
};

/// Raw sequences are prepared with evaluation-mode (seed-fixed) sampling.
/// With a single stream present the fused prediction is that stream's.
EvalResult evaluate(const TwoStreamModel& model, const std::vector<SkeletonSequence>& data, double alpha, double beta,
                    std::size_t threads = 1);

/// Seed-fixed preparation used for every evaluation pass.
std::vector<SkeletonSequence> prepare_for_eval(const std::vector<SkeletonSequence>& data, const ModelConfig& config);

/// Mean loss and the summed-then-averaged gradient over a batch of prepared samples.
struct BatchGradient {
  GradMap grads;
  double mean_loss = 0.0;
};
BatchGradient batch_gradient(const StreamParams& params, const ModelConfig& config,
                             std::span<const SkeletonSequence* const> batch, std::size_t threads = 1);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace arrn
