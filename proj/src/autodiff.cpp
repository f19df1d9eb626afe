// SPDX-License-Identifier: Apache-2.0
#include "arrn/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace arrn {

// ---------------------------------------------------------------- GradMap

void GradMap::insert(const Parameter* param, Tensor grad) {
  if (index_.contains(param)) throw ContractError("duplicate gradient entry for " + param->name);
  index_.emplace(param, entries_.size());
  entries_.emplace_back(param, std::move(grad));
}

const Tensor& GradMap::at(const Parameter& param) const {
  auto it = index_.find(&param);
  if (it == index_.end()) throw ContractError("missing gradient entry for parameter '" + param.name + "'");
  return entries_[it->second].second;
}

Tensor& GradMap::at(const Parameter& param) {
  return const_cast<Tensor&>(std::as_const(*this).at(param));
}

void GradMap::accumulate(const GradMap& other) {
  for (const auto& [param, grad] : other.entries_) {
    auto it = index_.find(param);
    if (it == index_.end()) {
      insert(param, grad);
      continue;
    }
    auto& mine = entries_[it->second].second;
    for (std::size_t i = 0; i < mine.size(); ++i) mine[i] += grad[i];
  }
}

void GradMap::scale(double factor) {
  for (auto& entry : entries_) {
    for (auto& x : entry.second.storage()) x *= factor;
  }
}

// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::parameter(const Parameter& param) {
  if (!param.trainable) return constant(param.value);
  if (auto it = param_slots_.find(&param); it != param_slots_.end()) return Var{this, it->second};
  Var v = record(param.value, nullptr);
  nodes_[v.id].param = &param;
  param_slots_.emplace(&param, v.id);
  return v;
}

Var Tape::record(Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), nullptr});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor::zeros(node.value.shape());
  return node.grad;
}

void Tape::accumulate_grad(std::size_t id, const Tensor& delta) {
  auto& g = grad(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

GradMap Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_to_string(value(loss.id).shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor{};
  grad(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, id);
  }
  GradMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].param) continue;
    const auto& node = nodes_[id];
    out.insert(node.param, node.grad.empty() ? Tensor::zeros(node.value.shape()) : node.grad);
  }
  return out;
}

// ---------------------------------------------------------------- primitives

namespace {

std::atomic<bool> g_tanh_fault{false};

void same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands live on different tapes");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

enum class Broadcast { none, row_vector };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.rank() == 2 && b.rank() == 1 && b.size() == a.cols()) return Broadcast::row_vector;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                       shape_to_string(b.shape()));
}

// Sum an R x C adjoint over rows into a length-C vector.
Tensor reduce_rows(const Tensor& g, const Shape& vec_shape) {
  Tensor out(vec_shape);
  const std::size_t c = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out[j] += g[r * c + j];
  }
  return out;
}

// C += op(A) * op(B) for row-major matrices; transposes selected per operand.
void gemm_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c) {
  const std::size_t m = c.rows(), n = c.cols();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t a_cols = a.cols(), b_cols = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &c[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * a_cols + i] : a[i * a_cols + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = &b[p * b_cols];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * b_cols + p];
      }
    }
  }
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

namespace debug {
void set_tanh_gradient_fault(bool enabled) { g_tanh_fault = enabled; }
bool tanh_gradient_fault() { return g_tanh_fault; }
}  // namespace debug

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  const double peak = *std::max_element(logits.storage().begin(), logits.storage().end());
  Tensor out(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& x : out.storage()) x /= total;
  return out;
}

namespace ops {

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents disagree for " + shape_to_string(av.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  gemm_acc(av, false, bv, false, out);
  return a.tape->record(std::move(out), [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    gemm_acc(g, false, t.value(ib), true, t.grad(ia));
    gemm_acc(t.value(ia), true, g, false, t.grad(ib));
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, "add");
  Tensor out = av;
  const std::size_t c = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[kind == Broadcast::none ? i : i % c];
  return a.tape->record(std::move(out), [ia = a.id, ib = b.id, kind](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(ia, g);
    t.accumulate_grad(ib, kind == Broadcast::none ? g : reduce_rows(g, t.value(ib).shape()));
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("sub: incompatible shapes " + shape_to_string(av.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record(std::move(out), [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(ia, g);
    auto& gb = t.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, "mul");
  Tensor out = av;
  const std::size_t c = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[kind == Broadcast::none ? i : i % c];
  return a.tape->record(std::move(out), [ia = a.id, ib = b.id, kind](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const std::size_t c = bv.size();
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[kind == Broadcast::none ? i : i % c];
    auto& gb = t.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[kind == Broadcast::none ? i : i % c] += g[i] * av[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = map(x.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return x.tape->record(std::move(out), [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var x) {
  Tensor out = map(x.value(), [](double v) { return std::tanh(v); });
  return x.tape->record(std::move(out), [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    const double fault = debug::tanh_gradient_fault() ? 1.5 : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += fault * g[i] * (1.0 - y[i] * y[i]);
  });
}

Var affine(Var x, double scale, double shift) {
  Tensor out = map(x.value(), [=](double v) { return scale * v + shift; });
  return x.tape->record(std::move(out), [ix = x.id, scale](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().storage()) total += v;
  return x.tape->record(Tensor::scalar(total), [ix = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(ix).storage()) v += g;
  });
}

Var softmax(Var logits) {
  const Tensor& lv = logits.value();
  if (lv.rank() > 2 || lv.rows() != 1) {
    throw DimensionError("softmax: expected a vector, got " + shape_to_string(lv.shape()));
  }
  return logits.tape->record(arrn::softmax(lv), [il = logits.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    auto& gl = t.grad(il);
    for (std::size_t i = 0; i < y.size(); ++i) gl[i] += y[i] * (g[i] - dot);
  });
}

Var cross_entropy(Var probs, std::size_t label) {
  constexpr double kFloor = 1e-12;
  const Tensor& p = probs.value();
  if (label >= p.size()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(p.size()) + ")");
  }
  const double q = p[label];
  return probs.tape->record(Tensor::scalar(-std::log(std::max(q, kFloor))),
                            [ip = probs.id, label, q](Tape& t, std::size_t self) {
                              if (q < kFloor) return;
                              t.grad(ip)[label] += -t.grad(self)[0] / q;
                            });
}

Var reshape(Var x, Shape shape) {
  return x.tape->record(x.value().reshaped(std::move(shape)), [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape* tape = parts.front().tape;
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p, "concat_cols");
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row counts disagree, " + shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&v[r * widths[k]], widths[k], &out[r * total + offset]);
    }
    offset += widths[k];
  }
  return tape->record(std::move(out), [ids, widths, rows, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto& gk = t.grad(ids[k]);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + offset + c];
      }
      offset += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Tape* tape = parts.front().tape;
  const std::size_t cols = parts.front().value().cols();
  std::vector<std::size_t> ids;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p, "concat_rows");
    if (p.value().rank() > 2 || p.value().cols() != cols) {
      throw DimensionError("concat_rows: column counts disagree, " + shape_to_string(parts.front().shape()) +
                           " vs " + shape_to_string(p.shape()));
    }
    ids.push_back(p.id);
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  return tape->record(Tensor({rows, cols}, std::move(data)), [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      auto& gk = t.grad(id);
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offset + i];
      offset += gk.size();
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  if (count == 0 || begin + count > xv.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(xv.shape()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&xv[r * cols + begin], count, &out[r * count]);
  return x.tape->record(std::move(out), [ix = x.id, begin, count, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) gx[r * cols + begin + c] += g[r * count + c];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_rows");
  if (count == 0 || begin + count > xv.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  std::vector<double> data(xv.storage().begin() + begin * cols, xv.storage().begin() + (begin + count) * cols);
  return x.tape->record(Tensor({count, cols}, std::move(data)), [ix = x.id, begin, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  const Tensor& xv = x.value();
  require_rank2(xv, "gather_rows");
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  const std::size_t cols = xv.cols();
  Tensor out({index.size(), cols});
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= xv.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(index[k]) + " out of range for " +
                           shape_to_string(xv.shape()));
    }
    std::copy_n(&xv[index[k] * cols], cols, &out[k * cols]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape->record(std::move(out), [ix = x.id, idx = std::move(idx), cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t c = 0; c < cols; ++c) gx[idx[k] * cols + c] += g[k * cols + c];
    }
  });
}

Var segment_sum_rows(Var x, std::span<const std::size_t> segment, std::size_t segments) {
  const Tensor& xv = x.value();
  require_rank2(xv, "segment_sum_rows");
  if (segment.size() != xv.rows()) {
    throw DimensionError("segment_sum_rows: " + std::to_string(segment.size()) + " segment ids for " +
                         shape_to_string(xv.shape()));
  }
  if (segments == 0) throw DimensionError("segment_sum_rows: zero output rows");
  const std::size_t cols = xv.cols();
  Tensor out({segments, cols});
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] >= segments) throw DimensionError("segment_sum_rows: segment id out of range");
    for (std::size_t c = 0; c < cols; ++c) out[segment[k] * cols + c] += xv[k * cols + c];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return x.tape->record(std::move(out), [ix = x.id, seg = std::move(seg), cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t k = 0; k < seg.size(); ++k) {
      for (std::size_t c = 0; c < cols; ++c) gx[k * cols + c] += g[seg[k] * cols + c];
    }
  });
}

}  // namespace ops
}  // namespace arrn
