// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over Tensor values.
//
// A Tape records every primitive executed during one forward pass. Each
// record keeps its output value and a closure that pushes the output's
// adjoint into the adjoints of its inputs. Tape::backward replays the
// records in exact reverse order.
//
// Broadcasting is limited to one pattern: a rank-1 vector of length C
// combined with every row of an R x C matrix (add, mul).
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "arrn/tensor.hpp"

namespace arrn {

/// A named trainable tensor. Frozen parameters enter a tape as constants.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Gradients keyed by parameter, in tape registration order.
class GradMap {
 public:
  void insert(const Parameter* param, Tensor grad);
  bool contains(const Parameter& param) const { return index_.contains(&param); }
  const Tensor& at(const Parameter& param) const;
  Tensor& at(const Parameter& param);
  std::size_t size() const { return entries_.size(); }

  const std::vector<std::pair<const Parameter*, Tensor>>& entries() const { return entries_; }

  /// Adds `other` entry-wise. Missing keys are inserted.
  void accumulate(const GradMap& other);
  void scale(double factor);

 private:
  std::vector<std::pair<const Parameter*, Tensor>> entries_;
  std::unordered_map<const Parameter*, std::size_t> index_;
};

class Tape;

/// Handle to a value slot on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Tracks `param`; repeated calls return the same slot, holding the value
  /// copied on the first call. `param` must outlive the tape.
  Var parameter(const Parameter& param);

  /// Appends a primitive result. `backward` may be empty for non-differentiable outputs.
  Var record(Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Adjoint of a slot during backward; zero-filled on first access.
  Tensor& grad(std::size_t id);
  void accumulate_grad(std::size_t id, const Tensor& delta);

  std::size_t size() const { return nodes_.size(); }

  /// Gradient of scalar `loss` with respect to every tracked parameter.
  GradMap backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    const Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_slots_;
};

namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var sigmoid(Var x);
Var tanh(Var x);
/// scale * x + shift, elementwise.
Var affine(Var x, double scale, double shift);
Var sum(Var x);

/// Softmax over every element of a rank-1 or single-row tensor; max-subtracted.
Var softmax(Var logits);
/// -log(max(probs[label], 1e-12)).
Var cross_entropy(Var probs, std::size_t label);

Var reshape(Var x, Shape shape);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
/// out[k] = x[index[k]].
Var gather_rows(Var x, std::span<const std::size_t> index);
/// out[segment[k]] += x[k], with `segments` output rows.
Var segment_sum_rows(Var x, std::span<const std::size_t> segment, std::size_t segments);

}  // namespace ops

/// Non-differentiable softmax, shared by evaluation paths.
Tensor softmax(const Tensor& logits);

namespace debug {
/// When set, the tanh adjoint is deliberately wrong. Negative control for gradient checks.
void set_tanh_gradient_fault(bool enabled);
bool tanh_gradient_fault();
}  // namespace debug

}  // namespace arrn
