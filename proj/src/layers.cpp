// SPDX-License-Identifier: Apache-2.0
#include "arrn/layers.hpp"

#include <cmath>

namespace arrn {

Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& x : t.storage()) x = dist(rng);
  return t;
}

Affine make_affine(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Affine layer;
  layer.weight = {name + ".weight", uniform_init({in, out}, in, rng)};
  layer.bias = {name + ".bias", uniform_init({out}, in, rng)};
  return layer;
}

Var affine_forward(Tape& tape, Var x, const Affine& layer) {
  if (x.value().rank() != 2 || x.value().cols() != layer.input_dim()) {
    throw DimensionError(layer.weight.name + ": input " + shape_to_string(x.shape()) + " does not match weight " +
                         shape_to_string(layer.weight.value.shape()));
  }
  return ops::add(ops::matmul(x, tape.parameter(layer.weight)), tape.parameter(layer.bias));
}

}  // namespace arrn
