// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of tape gradients.
//
// Errors are measured per parameter tensor:
//   max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|)
// Coordinates whose true gradient is ~0 carry only rounding noise
// (about 1e-11 at epsilon = 1e-5), so an elementwise ratio is meaningless
// there; the tensor-wide scale is not.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arrn/autodiff.hpp"
#include "arrn/config.hpp"
#include "arrn/model.hpp"
#include "arrn/skeleton.hpp"

namespace arrn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-5;
};

struct ParameterCheck {
  std::string name;
  std::size_t count = 0;
  double relative_error = 0.0;
  double max_absolute_error = 0.0;
  double gradient_scale = 0.0;  // max |analytic|
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  bool passed = true;
};

/// Elementwise |a - n| / max(|a|, |n|); zero when both are zero.
double relative_error(double analytic, double numeric);

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares tape gradients of `loss` against central differences for every
/// coordinate of every parameter in `params`. Values are restored afterwards.
GradCheckReport check_gradients(const LossBuilder& loss, std::span<Parameter* const> params,
                                const GradCheckOptions& options = {});

/// Cross-entropy of one stream on one prepared sample.
GradCheckReport check_stream_gradients(StreamParams& params, const ModelConfig& config,
                                       const SkeletonSequence& prepared, const GradCheckOptions& options = {});

}  // namespace arrn
