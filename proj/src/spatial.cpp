// SPDX-License-Identifier: Apache-2.0
#include "arrn/spatial.hpp"

#include <array>
#include <vector>

namespace arrn {

namespace {

std::size_t frame_count(const Tensor& stacked, std::size_t joints, const char* op) {
  if (joints == 0 || stacked.rank() != 2 || stacked.rows() % joints != 0) {
    throw DimensionError(std::string(op) + ": " + shape_to_string(stacked.shape()) + " is not a stack of " +
                         std::to_string(joints) + "-node frames");
  }
  return stacked.rows() / joints;
}

// Ordered pairs (receiver i, sender j), j != i, within each frame.
struct PairIndex {
  std::vector<std::size_t> receiver;
  std::vector<std::size_t> sender;
};

PairIndex make_pairs(std::size_t frames, std::size_t joints) {
  PairIndex idx;
  const std::size_t per_frame = joints * (joints - 1);
  idx.receiver.reserve(frames * per_frame);
  idx.sender.reserve(frames * per_frame);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < joints; ++i) {
      for (std::size_t j = 0; j < joints; ++j) {
        if (i == j) continue;
        idx.receiver.push_back(f * joints + i);
        idx.sender.push_back(f * joints + j);
      }
    }
  }
  return idx;
}

Var gate(Tape& tape, Var input, Var state, const Parameter& w, const Parameter& u, const Parameter& b) {
  return ops::add(ops::add(ops::matmul(input, tape.parameter(w)), ops::matmul(state, tape.parameter(u))),
                  tape.parameter(b));
}

}  // namespace

EmbeddingParams make_embedding(std::size_t input_dim, std::size_t state_dim, std::mt19937_64& rng) {
  return {make_affine("embedding", input_dim, state_dim, rng)};
}

MessageMlpParams make_message_mlp(std::size_t state_dim, std::size_t hidden_dim, std::mt19937_64& rng) {
  return {make_affine("message.fc1", 2 * state_dim, hidden_dim, rng),
          make_affine("message.fc2", hidden_dim, hidden_dim, rng),
          make_affine("message.fc3", hidden_dim, state_dim, rng)};
}

NodeGruParams make_node_gru(std::size_t state_dim, std::mt19937_64& rng) {
  const std::size_t in = 2 * state_dim;
  NodeGruParams p;
  auto fill = [&](Parameter& w, Parameter& u, Parameter& b, const std::string& gate) {
    w = {"node." + gate + ".w", uniform_init({in, state_dim}, in, rng)};
    u = {"node." + gate + ".u", uniform_init({state_dim, state_dim}, state_dim, rng)};
    b = {"node." + gate + ".b", uniform_init({state_dim}, in, rng)};
  };
  fill(p.w_update, p.u_update, p.b_update, "update");
  fill(p.w_reset, p.u_reset, p.b_reset, "reset");
  fill(p.w_candidate, p.u_candidate, p.b_candidate, "candidate");
  return p;
}

AttentionParams make_attention(std::size_t joints, std::size_t state_dim, std::size_t output_dim,
                               std::mt19937_64& rng) {
  AttentionParams p;
  p.mask = {"attention.mask", Tensor::ones({joints})};
  p.reduce = make_affine("attention.reduce", joints * state_dim, output_dim, rng);
  return p;
}

SpatialParams make_spatial(std::size_t input_dim, std::size_t joints, std::size_t state_dim,
                           std::size_t attention_dim, std::mt19937_64& rng) {
  SpatialParams p;
  p.embedding = make_embedding(input_dim, state_dim, rng);
  p.message = make_message_mlp(state_dim, state_dim, rng);
  p.node = make_node_gru(state_dim, rng);
  p.attention = make_attention(joints, state_dim, attention_dim, rng);
  return p;
}

Var embed_frames(Tape& tape, Var inputs, const EmbeddingParams& params) {
  return affine_forward(tape, inputs, params.layer);
}

Var aggregate_messages(Tape& tape, Var state, std::size_t joints, const MessageMlpParams& params) {
  const std::size_t frames = frame_count(state.value(), joints, "aggregate_messages");
  if (joints == 1) return tape.constant(Tensor::zeros(state.shape()));
  const PairIndex pairs = make_pairs(frames, joints);
  const std::array<Var, 2> halves{ops::gather_rows(state, pairs.receiver), ops::gather_rows(state, pairs.sender)};
  Var x = ops::concat_cols(halves);
  x = ops::tanh(affine_forward(tape, x, params.fc1));
  x = ops::tanh(affine_forward(tape, x, params.fc2));
  x = affine_forward(tape, x, params.fc3);
  return ops::segment_sum_rows(x, pairs.receiver, state.value().rows());
}

Var gru_step(Tape& tape, Var state, Var input, const NodeGruParams& p) {
  Var z = ops::sigmoid(gate(tape, input, state, p.w_update, p.u_update, p.b_update));
  Var r = ops::sigmoid(gate(tape, input, state, p.w_reset, p.u_reset, p.b_reset));
  Var n = ops::tanh(gate(tape, input, ops::mul(r, state), p.w_candidate, p.u_candidate, p.b_candidate));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return ops::add(n, ops::mul(z, ops::sub(state, n)));
}

Var rrn_forward(Tape& tape, Var embedded, std::size_t joints, const MessageMlpParams& message,
                const NodeGruParams& node, std::size_t iterations) {
  if (iterations == 0) throw ConfigError("rrn_forward: iteration count E must be at least 1");
  frame_count(embedded.value(), joints, "rrn_forward");
  if (embedded.value().cols() != node.state_dim()) {
    throw DimensionError("rrn_forward: node width " + std::to_string(embedded.value().cols()) +
                         " does not match GRU state width " + std::to_string(node.state_dim()));
  }
  Var h = embedded;
  for (std::size_t e = 0; e < iterations; ++e) {
    Var m = aggregate_messages(tape, h, joints, message);
    const std::array<Var, 2> parts{embedded, m};
    h = gru_step(tape, h, ops::concat_cols(parts), node);
  }
  return h;
}

Var attend_reduce(Tape& tape, Var w, std::size_t joints, const AttentionParams& params) {
  const std::size_t frames = frame_count(w.value(), joints, "attend_reduce");
  const std::size_t width = w.value().cols();
  if (params.mask.value.size() != joints) {
    throw DimensionError("attend_reduce: mask has " + std::to_string(params.mask.value.size()) +
                         " entries for " + std::to_string(joints) + " nodes");
  }
  // Expand mask [J] to [J*M] by a constant 0/1 matrix so that only the
  // row-vector broadcast is needed.
  Tensor expand({joints, joints * width});
  for (std::size_t i = 0; i < joints; ++i) {
    for (std::size_t c = 0; c < width; ++c) expand.at(i, i * width + c) = 1.0;
  }
  Var mask_row = ops::reshape(tape.parameter(params.mask), {1, joints});
  Var gate = ops::reshape(ops::matmul(mask_row, tape.constant(std::move(expand))), {joints * width});
  Var flat = ops::reshape(w, {frames, joints * width});
  return affine_forward(tape, ops::mul(flat, gate), params.reduce);
}

Var spatial_forward(Tape& tape, Var inputs, std::size_t joints, const SpatialParams& params, std::size_t iterations) {
  Var v = embed_frames(tape, inputs, params.embedding);
  Var w = rrn_forward(tape, v, joints, params.message, params.node, iterations);
  return attend_reduce(tape, w, joints, params.attention);
}

}  // namespace arrn
