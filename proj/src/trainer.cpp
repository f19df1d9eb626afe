// SPDX-License-Identifier: Apache-2.0
#include "arrn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "arrn/random.hpp"

namespace arrn {

using nlohmann::json;

namespace {
constexpr std::uint64_t kEvalSamplingTag = 0xe7a1;
constexpr std::uint64_t kTrainSamplingTag = 0x7a19;
constexpr std::uint64_t kShuffleTag = 0x5bf1;
}  // namespace

Tensor fuse(const Tensor& y_joint, const Tensor& y_line, double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || std::abs(alpha + beta - 1.0) > 1e-12) {
    throw ConfigError("fusion weights must be non-negative and sum to 1, got alpha=" + std::to_string(alpha) +
                      " beta=" + std::to_string(beta));
  }
  if (y_joint.shape() != y_line.shape()) {
    throw DimensionError("fuse: " + shape_to_string(y_joint.shape()) + " vs " + shape_to_string(y_line.shape()));
  }
  Tensor out(y_joint.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * y_joint[i] + beta * y_line[i];
  return out;
}

double cross_entropy(const Tensor& y, std::size_t label) {
  if (label >= y.size()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(y.size()) +
                        ")");
  }
  return -std::log(std::max(y[label], 1e-12));
}

std::size_t argmax(const Tensor& y) {
  if (y.empty()) throw DomainError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] > y[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------- optimizers

void sgd_step(std::span<Parameter* const> params, const GradMap& grads, double learning_rate) {
  for (Parameter* p : params) grads.at(*p);  // all-or-nothing
  for (Parameter* p : params) {
    const Tensor& g = grads.at(*p);
    for (std::size_t i = 0; i < g.size(); ++i) p->value[i] -= learning_rate * g[i];
  }
}

void adam_step(std::span<Parameter* const> params, const GradMap& grads, AdamState& state, double learning_rate,
               const AdamSettings& s) {
  for (Parameter* p : params) grads.at(*p);
  if (state.first_moment.empty()) {
    for (Parameter* p : params) {
      state.first_moment.push_back(Tensor::zeros(p->value.shape()));
      state.second_moment.push_back(Tensor::zeros(p->value.shape()));
    }
  }
  if (state.first_moment.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
  ++state.steps;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.steps));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Tensor& g = grads.at(p);
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double learning_rate, double factor, std::size_t patience)
    : learning_rate_(learning_rate), factor_(factor), patience_(patience) {
  if (patience == 0) throw ConfigError("plateau_patience must be at least 1");
}

double PlateauScheduler::observe(double accuracy) {
  if (!best_ || accuracy > *best_) {
    best_ = accuracy;
    stale_ = 0;
    return learning_rate_;
  }
  if (++stale_ >= patience_) {
    learning_rate_ *= factor_;
    stale_ = 0;
  }
  return learning_rate_;
}

// ---------------------------------------------------------------- report

json TrainReport::to_json() const {
  json streams = json::array();
  if (joint) streams.push_back("joint");
  if (line) streams.push_back("line");
  auto stats = [](const StreamEpochStats& s) {
    return json{{"loss", s.loss},
                {"train_accuracy", s.train_accuracy},
                {"val_accuracy", s.val_accuracy},
                {"learning_rate", s.learning_rate}};
  };
  json rows = json::array();
  for (const auto& e : epochs) {
    json row = {{"epoch", e.epoch}};
    if (e.joint) row["joint"] = stats(*e.joint);
    if (e.line) row["line"] = stats(*e.line);
    row["fused"] = {{"train_accuracy", e.fused_train_accuracy}, {"val_accuracy", e.fused_val_accuracy}};
    rows.push_back(std::move(row));
  }
  return json{{"format_version", kReportFormatVersion}, {"streams", std::move(streams)}, {"epochs", std::move(rows)}};
}

// ---------------------------------------------------------------- execution

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

BatchGradient batch_gradient(const StreamParams& params, const ModelConfig& config,
                             std::span<const SkeletonSequence* const> batch, std::size_t threads) {
  if (batch.empty()) throw ContractError("batch_gradient: empty batch");
  std::vector<GradMap> per_sample(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t k) {
    Tape tape;
    Var probs = stream_forward(tape, params, config, *batch[k]);
    Var loss = ops::cross_entropy(probs, batch[k]->label);
    losses[k] = loss.value()[0];
    per_sample[k] = tape.backward(loss);
  });
  // Fixed ascending reduction order.
  BatchGradient out;
  out.grads = std::move(per_sample[0]);
  for (std::size_t k = 1; k < batch.size(); ++k) out.grads.accumulate(per_sample[k]);
  out.grads.scale(1.0 / static_cast<double>(batch.size()));
  for (double l : losses) out.mean_loss += l;
  out.mean_loss /= static_cast<double>(batch.size());
  return out;
}

std::vector<SkeletonSequence> prepare_for_eval(const std::vector<SkeletonSequence>& data, const ModelConfig& config) {
  const DatasetSpec spec = config.dataset_spec();
  std::vector<SkeletonSequence> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(prepare_sequence(data[i], spec, config.T, derive_seed(config.rng_seed, {kEvalSamplingTag, i})));
  }
  return out;
}

namespace {

std::vector<Tensor> predict_all(const StreamParams& params, const ModelConfig& config,
                                const std::vector<SkeletonSequence>& prepared, std::size_t threads) {
  std::vector<Tensor> out(prepared.size());
  parallel_for(prepared.size(), threads,
               [&](std::size_t i) { out[i] = stream_predict(params, config, prepared[i]); });
  return out;
}

double accuracy_of(const std::vector<Tensor>& probs, const std::vector<std::size_t>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += argmax(probs[i]) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

EvalResult evaluate_prepared(const TwoStreamModel& model, const std::vector<SkeletonSequence>& prepared, double alpha,
                             double beta, std::size_t threads) {
  if (prepared.empty()) throw ContractError("evaluate: empty dataset");
  if (!model.joint && !model.line) throw ContractError("evaluate: model has no stream");
  EvalResult r;
  for (const auto& s : prepared) r.labels.push_back(s.label);
  if (model.joint) {
    r.joint_probs = predict_all(*model.joint, model.config, prepared, threads);
    r.joint_accuracy = accuracy_of(r.joint_probs, r.labels);
  }
  if (model.line) {
    r.line_probs = predict_all(*model.line, model.config, prepared, threads);
    r.line_accuracy = accuracy_of(r.line_probs, r.labels);
  }
  if (model.joint && model.line) {
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      r.fused_probs.push_back(fuse(r.joint_probs[i], r.line_probs[i], alpha, beta));
    }
  } else {
    r.fused_probs = model.joint ? r.joint_probs : r.line_probs;
  }
  r.fused_accuracy = accuracy_of(r.fused_probs, r.labels);
  return r;
}

void check_dataset(const std::vector<SkeletonSequence>& data, const ModelConfig& config, const char* which) {
  if (data.empty()) throw ContractError(std::string(which) + " set is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (s.frames.empty()) throw ContractError(std::string(which) + " sample " + std::to_string(i) + " has no frames");
    if (s.label >= config.K) {
      throw ConfigError(std::string(which) + " sample " + std::to_string(i) + ": label " + std::to_string(s.label) +
                        " outside [0, K=" + std::to_string(config.K) + ")");
    }
    for (const auto& f : s.frames) {
      if (f.joint_count() != config.J) {
        throw ConfigError(std::string(which) + " sample " + std::to_string(i) + ": expected J=" +
                          std::to_string(config.J) + " joints, found " + std::to_string(f.joint_count()));
      }
    }
  }
}

struct StreamTrainer {
  StreamParams* params;
  std::vector<Parameter*> trainable;
  AdamState adam;
  PlateauScheduler plateau;
};

}  // namespace

EvalResult evaluate(const TwoStreamModel& model, const std::vector<SkeletonSequence>& data, double alpha, double beta,
                    std::size_t threads) {
  return evaluate_prepared(model, prepare_for_eval(data, model.config), alpha, beta, threads);
}

FusionWeights tune_fusion_weights(std::span<const Tensor> y_joint, std::span<const Tensor> y_line,
                                  std::span<const std::size_t> labels) {
  if (labels.empty()) throw ContractError("tune_fusion_weights: empty validation set");
  if (y_joint.size() != labels.size() || y_line.size() != labels.size()) {
    throw ContractError("tune_fusion_weights: predictions and labels are not aligned");
  }
  constexpr int kSteps = 20;
  FusionWeights best;
  int best_step = -1;
  std::size_t best_correct = 0;
  for (int step = 0; step <= kSteps; ++step) {
    const double alpha = step / static_cast<double>(kSteps);
    const double beta = (kSteps - step) / static_cast<double>(kSteps);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax(fuse(y_joint[i], y_line[i], alpha, beta)) == labels[i];
    const bool better = best_step < 0 || correct > best_correct ||
                        (correct == best_correct && std::abs(step - kSteps / 2) < std::abs(best_step - kSteps / 2));
    if (better) {
      best_step = step;
      best_correct = correct;
      best = {alpha, beta, static_cast<double>(correct) / static_cast<double>(labels.size())};
    }
  }
  return best;
}

TrainResult train(const std::vector<SkeletonSequence>& train_set, const std::vector<SkeletonSequence>& val_set,
                  const ModelConfig& config, const TrainOptions& options) {
  config.validate();
  if (!options.train_joint && !options.train_line) throw ConfigError("no stream selected for training");
  check_dataset(train_set, config, "training");
  check_dataset(val_set, config, "validation");

  TrainResult result;
  result.model = init_model(config, options.train_joint, options.train_line);
  result.report.joint = options.train_joint;
  result.report.line = options.train_line;

  std::vector<StreamTrainer> streams;
  for (auto* s : {&result.model.joint, &result.model.line}) {
    if (!s->has_value()) continue;
    streams.push_back({&**s, (*s)->trainable_parameters(), {},
                       PlateauScheduler(config.learning_rate, config.lr_decay_factor, config.plateau_patience)});
  }

  const DatasetSpec spec = config.dataset_spec();
  const auto train_eval = prepare_for_eval(train_set, config);
  const auto val_eval = prepare_for_eval(val_set, config);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    // Frames are re-sampled every epoch; the shuffle is shared by both streams.
    std::vector<SkeletonSequence> prepared;
    prepared.reserve(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      prepared.push_back(
          prepare_sequence(train_set[i], spec, config.T, derive_seed(config.rng_seed, {kTrainSamplingTag, epoch, i})));
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.rng_seed, {kShuffleTag, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord record;
    record.epoch = epoch;
    for (auto& st : streams) {
      const double lr = st.plateau.learning_rate();
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<const SkeletonSequence*> batch;
        for (std::size_t k = start; k < end; ++k) batch.push_back(&prepared[order[k]]);
        BatchGradient bg = batch_gradient(*st.params, config, batch, options.threads);
        loss_sum += bg.mean_loss * static_cast<double>(batch.size());
        if (config.optimizer == OptimizerKind::sgd) {
          sgd_step(st.trainable, bg.grads, lr);
        } else {
          adam_step(st.trainable, bg.grads, st.adam, lr);
        }
      }
      StreamEpochStats stats;
      stats.loss = loss_sum / static_cast<double>(order.size());
      stats.learning_rate = lr;
      (st.params->kind == StreamKind::joint ? record.joint : record.line) = stats;
    }

    const EvalResult on_train = evaluate_prepared(result.model, train_eval, config.alpha, config.beta, options.threads);
    const EvalResult on_val = evaluate_prepared(result.model, val_eval, config.alpha, config.beta, options.threads);
    if (record.joint) {
      record.joint->train_accuracy = *on_train.joint_accuracy;
      record.joint->val_accuracy = *on_val.joint_accuracy;
    }
    if (record.line) {
      record.line->train_accuracy = *on_train.line_accuracy;
      record.line->val_accuracy = *on_val.line_accuracy;
    }
    record.fused_train_accuracy = on_train.fused_accuracy;
    record.fused_val_accuracy = on_val.fused_accuracy;

    if (config.optimizer == OptimizerKind::sgd) {
      for (auto& st : streams) {
        st.plateau.observe(st.params->kind == StreamKind::joint ? record.joint->val_accuracy
                                                                : record.line->val_accuracy);
      }
    }
    result.report.epochs.push_back(record);
    if (options.on_epoch && !options.on_epoch(record)) break;
  }
  return result;
}

}  // namespace arrn
