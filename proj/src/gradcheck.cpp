// SPDX-License-Identifier: Apache-2.0
#include "arrn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace arrn {

double relative_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  return diff == 0.0 ? 0.0 : diff / std::max(std::abs(analytic), std::abs(numeric));
}

GradCheckReport check_gradients(const LossBuilder& loss, std::span<Parameter* const> params,
                                const GradCheckOptions& options) {
  GradMap analytic;
  {
    Tape tape;
    Var l = loss(tape);
    analytic = tape.backward(l);
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    ParameterCheck check;
    check.name = p->name;
    check.count = p->value.size();
    const Tensor zero = Tensor::zeros(p->value.shape());
    const Tensor& g = analytic.contains(*p) ? analytic.at(*p) : zero;
    double numeric_scale = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + options.epsilon;
      const double up = evaluate();
      p->value[i] = original - options.epsilon;
      const double down = evaluate();
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      check.max_absolute_error = std::max(check.max_absolute_error, std::abs(g[i] - numeric));
      check.gradient_scale = std::max(check.gradient_scale, std::abs(g[i]));
      numeric_scale = std::max(numeric_scale, std::abs(numeric));
    }
    const double scale = std::max(check.gradient_scale, numeric_scale);
    check.relative_error = check.max_absolute_error == 0.0 ? 0.0 : check.max_absolute_error / scale;
    report.max_relative_error = std::max(report.max_relative_error, check.relative_error);
    report.parameters.push_back(std::move(check));
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

GradCheckReport check_stream_gradients(StreamParams& params, const ModelConfig& config,
                                       const SkeletonSequence& prepared, const GradCheckOptions& options) {
  const auto trainable = params.trainable_parameters();
  return check_gradients(
      [&](Tape& tape) { return ops::cross_entropy(stream_forward(tape, params, config, prepared), prepared.label); },
      trainable, options);
}

}  // namespace arrn
