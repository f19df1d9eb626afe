// SPDX-License-Identifier: Apache-2.0
//
// Per-frame spatial feature extraction for one stream.
//
// Frames are processed as a stack: an input of F frames with J nodes each is
// a [F*J x d] matrix whose rows are ordered frame-major. Every frame is an
// independent fully connected graph; nothing crosses frame boundaries.
#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "arrn/autodiff.hpp"
#include "arrn/layers.hpp"

namespace arrn {

/// Maps each joint (3) or line vector (3(J-1)) to M dims.
struct EmbeddingParams {
  Affine layer;
};

/// Message function: [h_recv, h_send] (2M) -> M -> M -> M, tanh after the
/// first two layers.
struct MessageMlpParams {
  Affine fc1;
  Affine fc2;
  Affine fc3;
};

/// GRU node update. Input is [v_i, m_i] (2M), state is h_i (M).
///   z  = sigmoid(x W_z + h U_z + b_z)
///   r  = sigmoid(x W_r + h U_r + b_r)
///   n  = tanh(x W_n + (r * h) U_n + b_n)
///   h' = (1 - z) * n + z * h
struct NodeGruParams {
  Parameter w_update, u_update, b_update;
  Parameter w_reset, u_reset, b_reset;
  Parameter w_candidate, u_candidate, b_candidate;

  std::size_t state_dim() const { return u_update.value.shape()[0]; }
};

/// Learnable per-node gate followed by a reduction of the J*M product to A dims.
struct AttentionParams {
  Parameter mask;  // [J]
  Affine reduce;   // [(J*M) x A]
};

struct SpatialParams {
  EmbeddingParams embedding;
  MessageMlpParams message;
  NodeGruParams node;
  AttentionParams attention;

  template <class F>
  void for_each_parameter(F&& f) {
    for (Affine* a : {&embedding.layer, &message.fc1, &message.fc2, &message.fc3}) {
      f(a->weight);
      f(a->bias);
    }
    for (Parameter* p : {&node.w_update, &node.u_update, &node.b_update, &node.w_reset, &node.u_reset,
                         &node.b_reset, &node.w_candidate, &node.u_candidate, &node.b_candidate}) {
      f(*p);
    }
    f(attention.mask);
    f(attention.reduce.weight);
    f(attention.reduce.bias);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<SpatialParams*>(this)->for_each_parameter([&](Parameter& p) { f(static_cast<const Parameter&>(p)); });
  }
};

EmbeddingParams make_embedding(std::size_t input_dim, std::size_t state_dim, std::mt19937_64& rng);
MessageMlpParams make_message_mlp(std::size_t state_dim, std::size_t hidden_dim, std::mt19937_64& rng);
NodeGruParams make_node_gru(std::size_t state_dim, std::mt19937_64& rng);
/// Mask starts at all ones.
AttentionParams make_attention(std::size_t joints, std::size_t state_dim, std::size_t output_dim,
                               std::mt19937_64& rng);
SpatialParams make_spatial(std::size_t input_dim, std::size_t joints, std::size_t state_dim,
                           std::size_t attention_dim, std::mt19937_64& rng);

/// inputs: [F*J x input_dim] -> [F*J x M]. Shared weights across joints and frames.
Var embed_frames(Tape& tape, Var inputs, const EmbeddingParams& params);

/// One round of messages: row i of the result is sum over j != i of f(h_i, h_j).
Var aggregate_messages(Tape& tape, Var state, std::size_t joints, const MessageMlpParams& params);

/// One GRU step for every node.
Var gru_step(Tape& tape, Var state, Var input, const NodeGruParams& params);

/// `iterations` rounds of message passing over the fully connected graph of
/// each frame, starting from h^0 = v. Returns h^E, shape of `embedded`.
Var rrn_forward(Tape& tape, Var embedded, std::size_t joints, const MessageMlpParams& message,
                const NodeGruParams& node, std::size_t iterations);

/// w: [F*J x M] -> [F x A]. Node i of every frame is scaled by mask[i].
Var attend_reduce(Tape& tape, Var w, std::size_t joints, const AttentionParams& params);

/// Embedding -> RRN -> attention for every frame. Returns [F x A].
Var spatial_forward(Tape& tape, Var inputs, std::size_t joints, const SpatialParams& params, std::size_t iterations);

}  // namespace arrn
