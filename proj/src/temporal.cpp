// SPDX-License-Identifier: Apache-2.0
#include "arrn/temporal.hpp"

#include <string>

namespace arrn {

LstmStackParams make_lstm_stack(std::size_t input_dim, std::span<const std::size_t> widths, std::mt19937_64& rng) {
  if (widths.empty()) throw ConfigError("LSTM stack needs at least one layer");
  LstmStackParams stack;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t h = widths[l];
    if (h == 0) throw ConfigError("LSTM layer " + std::to_string(l) + " has zero width");
    const std::string prefix = "lstm." + std::to_string(l);
    LstmLayerParams layer;
    layer.w_input = {prefix + ".w_input", uniform_init({in, 4 * h}, in, rng)};
    layer.w_hidden = {prefix + ".w_hidden", uniform_init({h, 4 * h}, h, rng)};
    layer.bias = {prefix + ".bias", uniform_init({4 * h}, in, rng)};
    stack.layers.push_back(std::move(layer));
    in = h;
  }
  return stack;
}

ClassifierParams make_classifier(std::size_t frames, std::size_t feature_dim, std::size_t classes,
                                 std::mt19937_64& rng) {
  return {make_affine("classifier", frames * feature_dim, classes, rng)};
}

Var lstm_forward(Tape& tape, Var sequence, const LstmStackParams& params) {
  if (sequence.value().rank() != 2) {
    throw DimensionError("lstm_forward: expected [T x A], got " + shape_to_string(sequence.shape()));
  }
  const std::size_t steps = sequence.value().rows();
  Var x = sequence;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (x.value().cols() != layer.input_dim()) {
      throw DimensionError("lstm layer " + std::to_string(l) + ": input width " + std::to_string(x.value().cols()) +
                           " but weights expect " + std::to_string(layer.input_dim()));
    }
    const std::size_t h = layer.width();
    Var projected = ops::add(ops::matmul(x, tape.parameter(layer.w_input)), tape.parameter(layer.bias));
    Var w_hidden = tape.parameter(layer.w_hidden);
    Var hidden = tape.constant(Tensor::zeros({1, h}));
    Var cell = tape.constant(Tensor::zeros({1, h}));
    std::vector<Var> outputs;
    outputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      Var gates = ops::add(ops::slice_rows(projected, t, 1), ops::matmul(hidden, w_hidden));
      Var in_gate = ops::sigmoid(ops::slice_cols(gates, 0, h));
      Var forget_gate = ops::sigmoid(ops::slice_cols(gates, h, h));
      Var candidate = ops::tanh(ops::slice_cols(gates, 2 * h, h));
      Var out_gate = ops::sigmoid(ops::slice_cols(gates, 3 * h, h));
      cell = ops::add(ops::mul(forget_gate, cell), ops::mul(in_gate, candidate));
      hidden = ops::mul(out_gate, ops::tanh(cell));
      outputs.push_back(hidden);
    }
    x = ops::concat_rows(outputs);
  }
  return x;
}

Var classify(Tape& tape, Var q, const ClassifierParams& params) {
  Var flat = ops::reshape(q, {1, q.value().size()});
  Var logits = affine_forward(tape, flat, params.layer);
  return ops::reshape(ops::softmax(logits), {logits.value().size()});
}

}  // namespace arrn
