// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "arrn/trainer.hpp"

using namespace arrn;

namespace {

Tensor random_probs(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  Tensor logits({k});
  for (auto& x : logits.storage()) x = d(rng);
  return softmax(logits);
}

ModelConfig small_config() {
  ModelConfig c;
  c.J = 4;
  c.K = 2;
  c.T = 4;
  c.M = 4;
  c.E = 1;
  c.H = 1;
  c.A = 6;
  c.layer_widths = {5};
  c.batch_size = 4;
  c.epochs = 3;
  c.rng_seed = 21;
  c.hip_reference_indices = {0};
  c.learning_rate = 0.01;
  return c;
}

std::vector<SkeletonSequence> small_data(std::uint64_t seed, std::size_t per_class = 4) {
  SyntheticSpec s;
  s.joints = 4;
  s.samples_per_class = per_class;
  s.min_frames = 3;
  s.max_frames = 6;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST_CASE("fuse examples") {
  const Tensor yj = Tensor::vector({0.7, 0.2, 0.1}), yl = Tensor::vector({0.1, 0.3, 0.6});
  CHECK(fuse(yj, yl, 1.0, 0.0) == yj);
  CHECK(fuse(Tensor::vector({1, 0}), Tensor::vector({0, 1}), 0.5, 0.5) == Tensor::vector({0.5, 0.5}));
  CHECK(max_abs_diff(fuse(yj, yj, 0.3, 0.7), yj) <= 1e-15);
  CHECK_THROWS_AS(fuse(yj, yl, 0.6, 0.6), ConfigError);
  CHECK_THROWS_AS(fuse(yj, yl, -0.1, 1.1), ConfigError);
  CHECK_THROWS_AS(fuse(yj, Tensor::vector({0.5, 0.5}), 0.5, 0.5), DimensionError);
}

TEST_CASE("fuse preserves probability vectors and shared maximizers") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 7;
    const double alpha = u(rng);
    const Tensor yj = random_probs(k, rng), yl = random_probs(k, rng);
    const Tensor y = fuse(yj, yl, alpha, 1.0 - alpha);
    double total = 0.0, lowest = 1.0;
    for (double p : y.storage()) {
      total += p;
      lowest = std::min(lowest, p);
    }
    REQUIRE(lowest >= 0.0);
    REQUIRE(std::abs(total - 1.0) <= 1e-12);
    if (argmax(yj) == argmax(yl)) REQUIRE(argmax(y) == argmax(yj));
  }
}

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(Tensor::vector({0.25, 0.25, 0.25, 0.25}), 3) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(cross_entropy(Tensor::vector({0.0, 1.0}), 1) == 0.0);
  CHECK(cross_entropy(Tensor::vector({1e-20, 1.0}), 0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-15));
  CHECK_THROWS_AS(cross_entropy(Tensor::vector({0.5, 0.5}), 2), ContractError);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(Tensor::vector({0.5, 0.5})) == 0);
  CHECK(argmax(Tensor::vector({0.1, 0.45, 0.45})) == 1);
}

TEST_CASE("sgd examples") {
  Parameter p{"p", Tensor::scalar(1.0)};
  std::vector<Parameter*> params{&p};
  GradMap g;
  g.insert(&p, Tensor::scalar(1.0));
  sgd_step(params, g, 0.1);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-15));

  GradMap zero;
  zero.insert(&p, Tensor::scalar(0.0));
  const Tensor before = p.value;
  sgd_step(params, zero, 0.1);
  CHECK(p.value == before);

  Parameter q{"q", Tensor::scalar(2.0)};
  std::vector<Parameter*> both{&p, &q};
  CHECK_THROWS_AS(sgd_step(both, g, 0.1), ContractError);
  CHECK(p.value == before);
}

TEST_CASE("adam matches the moment recurrences") {
  Parameter p{"p", Tensor::vector({0.5, -1.0})};
  std::vector<Parameter*> params{&p};
  AdamState state;
  const std::vector<std::array<double, 2>> grads{{0.3, -2.0}, {-0.1, 1.0}, {0.2, 0.0}};
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0.5, -1.0};
  const double lr = 0.01;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    GradMap g;
    g.insert(&p, Tensor::vector({grads[t - 1][0], grads[t - 1][1]}));
    adam_step(params, g, state, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[i] == doctest::Approx(x[i]).epsilon(1e-14));
    }
  }
  // First step moves every coordinate by about lr regardless of gradient scale.
  Parameter r{"r", Tensor::vector({0.0, 0.0})};
  std::vector<Parameter*> rp{&r};
  AdamState fresh;
  GradMap g;
  g.insert(&r, Tensor::vector({1e-3, 50.0}));
  adam_step(rp, g, fresh, lr);
  CHECK(r.value[0] == doctest::Approx(-lr).epsilon(1e-4));
  CHECK(r.value[1] == doctest::Approx(-lr).epsilon(1e-9));
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  Parameter p{"p", Tensor::vector({0.5, -1.0})};
  std::vector<Parameter*> params{&p};
  AdamState state;
  GradMap g;
  g.insert(&p, Tensor::zeros({2}));
  for (int i = 0; i < 3; ++i) adam_step(params, g, state, 0.1);
  CHECK(p.value == Tensor::vector({0.5, -1.0}));
  CHECK_THROWS_AS(adam_step(params, GradMap{}, state, 0.1), ContractError);
}

TEST_CASE("plateau decay") {
  PlateauScheduler s(0.01, 0.1, 5);
  s.observe(0.5);
  for (int i = 0; i < 4; ++i) CHECK(s.observe(0.5) == 0.01);
  CHECK(s.observe(0.5) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(s.epochs_without_improvement() == 0);
  // The counter restarts after a decay and after any strict improvement.
  for (int i = 0; i < 3; ++i) s.observe(0.4);
  s.observe(0.6);
  for (int i = 0; i < 4; ++i) s.observe(0.6);
  CHECK(s.learning_rate() == doctest::Approx(0.001).epsilon(1e-15));
  s.observe(0.55);
  CHECK(s.learning_rate() == doctest::Approx(0.0001).epsilon(1e-15));
  CHECK_THROWS_AS(PlateauScheduler(0.01, 0.1, 0), ConfigError);
}

TEST_CASE("tune_fusion_weights examples") {
  std::mt19937_64 rng(2);
  std::vector<Tensor> yj, yl;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 12; ++i) {
    yj.push_back(random_probs(3, rng));
    labels.push_back(i % 3);
  }
  const FusionWeights tie = tune_fusion_weights(yj, yj, labels);
  CHECK(tie.alpha == 0.5);
  CHECK(tie.beta == 0.5);

  yj.clear();
  for (auto l : labels) {
    // Barely right: any weight on the line stream flips the decision.
    Tensor good = Tensor::vector({0.33, 0.33, 0.33});
    good[l] = 0.34;
    yj.push_back(good);
    Tensor bad = Tensor::vector({0.0, 0.0, 0.0});
    bad[(l + 1) % 3] = 1.0;
    yl.push_back(bad);
  }
  const FusionWeights dom = tune_fusion_weights(yj, yl, labels);
  CHECK(dom.alpha == 1.0);
  CHECK(dom.beta == 0.0);
  CHECK(dom.accuracy == 1.0);

  CHECK_THROWS_AS(tune_fusion_weights({}, {}, {}), ContractError);
}

TEST_CASE("tune_fusion_weights matches an exhaustive grid search") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + trial % 20, k = 2 + trial % 4;
    std::vector<Tensor> yj, yl;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      yj.push_back(random_probs(k, rng));
      yl.push_back(random_probs(k, rng));
      labels.push_back(rng() % k);
    }
    // Oracle: score all 21 grid points with integer alpha steps, then apply
    // the tie rule to the set of maximizers.
    std::vector<std::size_t> correct(21);
    for (int s = 0; s <= 20; ++s) {
      const double a = s / 20.0, b = (20 - s) / 20.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
          if (a * yj[i][c] + b * yl[i][c] > a * yj[i][best] + b * yl[i][best]) best = c;
        }
        correct[s] += best == labels[i];
      }
    }
    const std::size_t top = *std::max_element(correct.begin(), correct.end());
    int chosen = -1;
    for (int s : {10, 9, 11, 8, 12, 7, 13, 6, 14, 5, 15, 4, 16, 3, 17, 2, 18, 1, 19, 0, 20}) {
      if (correct[s] == top) {
        chosen = s;
        break;
      }
    }
    const FusionWeights w = tune_fusion_weights(yj, yl, labels);
    REQUIRE(std::abs(w.alpha - chosen / 20.0) <= 1e-15);
    REQUIRE(std::abs(w.alpha + w.beta - 1.0) <= 1e-15);
    REQUIRE(w.accuracy == static_cast<double>(top) / static_cast<double>(n));
  }
}

TEST_CASE("evaluate examples") {
  ModelConfig c = small_config();
  TwoStreamModel model = init_model(c, true, false);
  // Zero parameters give uniform predictions; ties resolve to class 0.
  model.joint->for_each_parameter([](Parameter& p) { p.value = Tensor::zeros(p.value.shape()); });
  auto data = small_data(1);
  for (auto& s : data) s.label = 0;
  const EvalResult r = evaluate(model, data, 1.0, 0.0);
  CHECK(*r.joint_accuracy == 1.0);
  CHECK(r.fused_accuracy == 1.0);
  CHECK_FALSE(r.line_accuracy.has_value());
  CHECK_THROWS_AS(evaluate(model, {}, 0.5, 0.5), ContractError);
}

TEST_CASE("fused accuracy matches a recomputation from stored probabilities") {
  ModelConfig c = small_config();
  const TwoStreamModel model = init_model(c);
  const auto data = small_data(2, 6);
  const EvalResult r = evaluate(model, data, 0.35, 0.65, 2);
  REQUIRE(r.joint_probs.size() == data.size());
  std::size_t correct_fused = 0, correct_joint = 0, correct_line = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tensor y(r.joint_probs[i].shape());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = 0.35 * r.joint_probs[i][k] + 0.65 * r.line_probs[i][k];
    std::size_t best = 0;
    for (std::size_t k = 1; k < y.size(); ++k) {
      if (y[k] > y[best]) best = k;
    }
    correct_fused += best == data[i].label;
    correct_joint += argmax(r.joint_probs[i]) == data[i].label;
    correct_line += argmax(r.line_probs[i]) == data[i].label;
    CHECK(r.labels[i] == data[i].label);
  }
  const double n = static_cast<double>(data.size());
  CHECK(r.fused_accuracy == correct_fused / n);
  CHECK(*r.joint_accuracy == correct_joint / n);
  CHECK(*r.line_accuracy == correct_line / n);
}

TEST_CASE("train with zero epochs returns the initial model") {
  ModelConfig c = small_config();
  c.epochs = 0;
  const TrainResult r = train(small_data(3), small_data(4), c);
  CHECK(r.report.epochs.empty());
  CHECK(serialize_model(r.model) == serialize_model(init_model(c)));
}

TEST_CASE("train is deterministic and independent of the thread count") {
  ModelConfig c = small_config();
  const auto tr = small_data(5), va = small_data(6);
  TrainOptions one;
  TrainOptions four;
  four.threads = 4;
  const TrainResult a = train(tr, va, c, one);
  const TrainResult b = train(tr, va, c, one);
  const TrainResult d = train(tr, va, c, four);
  CHECK(a.report.epochs.size() == 3);
  CHECK(a.report.to_json().dump() == b.report.to_json().dump());
  CHECK(a.report.to_json().dump() == d.report.to_json().dump());
  CHECK(serialize_model(a.model) == serialize_model(d.model));
  CHECK(serialize_model(a.model) != serialize_model(init_model(c)));

  c.rng_seed = 22;
  CHECK(train(tr, va, c).report.to_json().dump() != a.report.to_json().dump());
}

TEST_CASE("train honours stream selection and early stop") {
  ModelConfig c = small_config();
  TrainOptions opt;
  opt.train_joint = false;
  opt.on_epoch = [](const EpochRecord& e) { return e.epoch < 2; };
  const TrainResult r = train(small_data(7), small_data(8), c, opt);
  CHECK(r.report.epochs.size() == 2);
  CHECK_FALSE(r.model.joint.has_value());
  CHECK(r.model.line.has_value());
  CHECK_FALSE(r.report.epochs[0].joint.has_value());
  CHECK(r.report.epochs[0].line->learning_rate == c.learning_rate);
  CHECK(r.report.epochs[0].fused_train_accuracy == r.report.epochs[0].line->train_accuracy);

  opt.train_line = false;
  CHECK_THROWS_AS(train(small_data(7), small_data(8), c, opt), ConfigError);
}

TEST_CASE("train surfaces data problems before the first epoch") {
  ModelConfig c = small_config();
  int calls = 0;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochRecord&) { return ++calls > 0; };
  CHECK_THROWS_AS(train({}, small_data(1), c, opt), ContractError);
  auto wrong = small_data(1);
  wrong[3].label = 7;
  CHECK_THROWS_AS(train(wrong, small_data(1), c, opt), ConfigError);
  c.J = 5;
  c.hip_reference_indices = {0};
  CHECK_THROWS_AS(train(small_data(1), small_data(1), c, opt), ConfigError);
  CHECK(calls == 0);
}

TEST_CASE("sgd training decays the learning rate on a plateau") {
  ModelConfig c = small_config();
  c.optimizer = OptimizerKind::sgd;
  c.learning_rate = 1e-9;  // accuracy cannot move
  c.plateau_patience = 2;
  c.epochs = 5;
  TrainOptions opt;
  opt.train_line = false;
  const TrainResult r = train(small_data(9), small_data(10), c, opt);
  std::vector<double> lrs;
  for (const auto& e : r.report.epochs) lrs.push_back(e.joint->learning_rate);
  CHECK(lrs[0] == 1e-9);
  CHECK(lrs[2] == 1e-9);
  CHECK(lrs[3] == doctest::Approx(1e-10).epsilon(1e-12));
  CHECK(lrs[4] == doctest::Approx(1e-10).epsilon(1e-12));
}

TEST_CASE("batch gradient does not depend on the worker count") {
  ModelConfig c = small_config();
  const StreamParams params = init_stream(StreamKind::line, c, 3);
  const auto data = prepare_for_eval(small_data(11), c);
  std::vector<const SkeletonSequence*> batch;
  for (const auto& s : data) batch.push_back(&s);
  const BatchGradient a = batch_gradient(params, c, batch, 1);
  const BatchGradient b = batch_gradient(params, c, batch, 3);
  CHECK(a.mean_loss == b.mean_loss);
  for (const auto& entry : a.grads.entries()) CHECK(entry.second == b.grads.at(*entry.first));
}

TEST_CASE("parallel_for covers every index once and propagates errors") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw DomainError("boom");
                  }),
                  DomainError);
}

TEST_CASE("report JSON carries the format version") {
  ModelConfig c = small_config();
  c.epochs = 1;
  const auto j = train(small_data(12), small_data(13), c).report.to_json();
  CHECK(j["format_version"] == kReportFormatVersion);
  CHECK(j["streams"] == nlohmann::json::array({"joint", "line"}));
  CHECK(j["epochs"].size() == 1);
  CHECK(j["epochs"][0].contains("fused"));
}
