// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "arrn/autodiff.hpp"
#include "arrn/layers.hpp"

namespace arrn {

/// One LSTM layer. Gate blocks are laid out [input | forget | cell | output]
/// along the 4h columns.
struct LstmLayerParams {
  Parameter w_input;   // [in x 4h]
  Parameter w_hidden;  // [h x 4h]
  Parameter bias;      // [4h]

  std::size_t input_dim() const { return w_input.value.shape()[0]; }
  std::size_t width() const { return w_hidden.value.shape()[0]; }
};

struct LstmStackParams {
  std::vector<LstmLayerParams> layers;

  std::size_t output_dim() const { return layers.back().width(); }
};

/// Flattened sequence [1 x T*h] -> K logits.
struct ClassifierParams {
  Affine layer;
};

LstmStackParams make_lstm_stack(std::size_t input_dim, std::span<const std::size_t> widths, std::mt19937_64& rng);
ClassifierParams make_classifier(std::size_t frames, std::size_t feature_dim, std::size_t classes,
                                 std::mt19937_64& rng);

/// Stacked LSTM with zero initial states. p: [T x A] -> [T x h_last].
Var lstm_forward(Tape& tape, Var sequence, const LstmStackParams& params);

/// Flattens q in frame order, maps to K logits, applies softmax. Returns [K].
Var classify(Tape& tape, Var q, const ClassifierParams& params);

}  // namespace arrn
