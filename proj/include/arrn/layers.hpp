// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "arrn/autodiff.hpp"

namespace arrn {

/// Fully-connected layer y = x W + b, W: [in x out], b: [out].
struct Affine {
  Parameter weight;
  Parameter bias;

  std::size_t input_dim() const { return weight.value.shape()[0]; }
  std::size_t output_dim() const { return weight.value.shape()[1]; }
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

Affine make_affine(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

/// x: [R x in] -> [R x out].
Var affine_forward(Tape& tape, Var x, const Affine& layer);

}  // namespace arrn
