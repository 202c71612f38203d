/*
 * Copyright 2026 The semloc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "semloc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "semloc/errors.hpp"

namespace semloc::ad {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank(std::string_view op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
  }
}

// fn(x) -> {y, dy/dx}
template <typename F>
Var unary(std::string_view op, Var a, F&& fn) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  Tensor dydx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [v, d] = fn(x[i]);
    y[i] = v;
    dydx[i] = d;
  }
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record(op, std::move(y), inputs,
                         [ia, dydx = std::move(dydx)](const Tensor& g, GradBuffer& gs) {
                           if (Tensor* ga = gs.slot(ia)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dydx[i];
                           }
                         });
}

void check_segments(std::string_view op, std::span<const std::size_t> segment, std::size_t rows,
                    std::size_t num_segments) {
  if (segment.size() != rows) {
    shape_fail(op, "segment ids length " + std::to_string(segment.size()) + " != rows " +
                       std::to_string(rows));
  }
  for (std::size_t s : segment) {
    if (s >= num_segments) {
      shape_fail(op, "segment id " + std::to_string(s) + " out of range " +
                         std::to_string(num_segments));
    }
  }
}

// out(n x m) += x(n x k) * y(k x m)
// Below this many multiply-adds a matmul stays single-threaded.
constexpr std::size_t kParallelWork = 1 << 16;

void gemm_accumulate(const double* __restrict x, const double* __restrict y, double* __restrict out,
                     std::size_t n, std::size_t k, std::size_t m, bool parallel) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double* __restrict orow = out + r * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double xv = x[r * k + l];
      const double* __restrict yrow = y + l * m;
      for (std::size_t c = 0; c < m; ++c) orow[c] += xv * yrow[c];
    }
  }
}

// out(n x k) += g(n x m) * y(k x m)^T, as row updates against y^T so the
// inner loop vectorises.
void gemm_nt_accumulate(const double* __restrict g, const double* __restrict y, double* __restrict out,
                        std::size_t n, std::size_t m, std::size_t k, bool parallel) {
  std::vector<double> yt(m * k);
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t c = 0; c < m; ++c) yt[c * k + l] = y[l * m + c];
  const double* __restrict ytp = yt.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double* __restrict grow = g + r * m;
    double* __restrict orow = out + r * k;
    for (std::size_t c = 0; c < m; ++c) {
      const double gv = grow[c];
      const double* __restrict ytrow = ytp + c * k;
      for (std::size_t l = 0; l < k; ++l) orow[l] += gv * ytrow[l];
    }
  }
}

// out(k x m) += x(n x k)^T * g(n x m). Every output element accumulates over
// r in ascending order on both paths.
void gemm_tn_accumulate(const double* __restrict x, const double* __restrict g, double* __restrict out,
                        std::size_t n, std::size_t k, std::size_t m, bool parallel) {
  if (!parallel) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* __restrict grow = g + r * m;
      for (std::size_t l = 0; l < k; ++l) {
        const double xr = x[r * k + l];
        double* __restrict orow = out + l * m;
        for (std::size_t c = 0; c < m; ++c) orow[c] += xr * grow[c];
      }
    }
    return;
  }
  const auto cols = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t l = 0; l < cols; ++l) {
    double* __restrict orow = out + l * m;
    for (std::size_t r = 0; r < n; ++r) {
      const double xr = x[r * k + l];
      const double* __restrict grow = g + r * m;
      for (std::size_t c = 0; c < m; ++c) orow[c] += xr * grow[c];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(*this); }

const Tensor& Gradients::operator[](Var leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) {
    throw Error("backward: gradient requested for node " + std::to_string(leaf.id()) +
                " which is not a parameter leaf");
  }
  return it->second;
}

GradBuffer::GradBuffer(const Tape& tape)
    : tape_(tape), grads_(tape.nodes_.size()), touched_(tape.nodes_.size(), false) {}

Tensor* GradBuffer::slot(std::size_t id) {
  if (!tape_.nodes_[id].requires_grad) return nullptr;
  if (!touched_[id]) {
    grads_[id] = Tensor(tape_.nodes_[id].value.shape());
    touched_[id] = true;
  }
  return &grads_[id];
}

const Tensor& GradBuffer::value(std::size_t id) const { return tape_.nodes_[id].value; }

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("autodiff: variable does not belong to this tape");
  }
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Tensor value) {
  Node n;
  n.op = "parameter";
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_parameter = true;
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericFault(std::string(op) + ": produced a non-finite value (output shape " +
                       shape_string(value.shape()) + ")");
  }
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owner(in);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return nodes_[v.id()].value;
}

Gradients Tape::backward(Var output) const {
  check_owner(output);
  const Node& out = nodes_[output.id()];
  if (out.value.size() != 1) {
    throw ShapeError("backward: output must be a scalar, got shape " +
                     shape_string(out.value.shape()));
  }
  GradBuffer buf(*this);
  if (Tensor* seed = buf.slot(output.id())) (*seed)[0] = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!buf.touched_[i] || !n.backward) continue;
    n.backward(buf.grads_[i], buf);
  }
  Gradients result;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_parameter) continue;
    const bool reached = i <= output.id() && buf.touched_[i];
    result.grads_.emplace(i, reached ? std::move(buf.grads_[i]) : Tensor(nodes_[i].value.shape()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  if (x.shape() == y.shape()) {
    Tensor out = x;
    out.add_inplace(y);
    return a.tape().record("add", std::move(out), inputs, [ia, ib](const Tensor& g, GradBuffer& gs) {
      if (Tensor* ga = gs.slot(ia)) ga->add_inplace(g);
      if (Tensor* gb = gs.slot(ib)) gb->add_inplace(g);
    });
  }
  if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
    Tensor out = x;
    const std::size_t n = x.rows(), m = x.cols();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) out[r * m + c] += y[c];
    return a.tape().record("add", std::move(out), inputs,
                           [ia, ib, n, m](const Tensor& g, GradBuffer& gs) {
                             if (Tensor* ga = gs.slot(ia)) ga->add_inplace(g);
                             if (Tensor* gb = gs.slot(ib)) {
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < m; ++c) (*gb)[c] += g[r * m + c];
                             }
                           });
  }
  shape_fail("add", "shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return a.tape().record("sub", std::move(out), inputs, [ia, ib](const Tensor& g, GradBuffer& gs) {
    if (Tensor* ga = gs.slot(ia)) ga->add_inplace(g);
    if (Tensor* gb = gs.slot(ib))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return a.tape().record("mul", std::move(out), inputs, [ia, ib](const Tensor& g, GradBuffer& gs) {
    const Tensor& xv = gs.value(ia);
    const Tensor& yv = gs.value(ib);
    if (Tensor* ga = gs.slot(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * yv[i];
    if (Tensor* gb = gs.slot(ib))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * xv[i];
  });
}

Var scale(Var a, double c) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("scale", std::move(out), inputs, [ia, c](const Tensor& g, GradBuffer& gs) {
    if (Tensor* ga = gs.slot(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
  });
}

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank("matmul", x, 2);
  const std::size_t n = x.rows(), k = x.cols();
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};

  if (y.rank() == 1) {
    if (y.size() != k) {
      shape_fail("matmul", "inner dimensions differ " + shape_string(x.shape()) + " x " +
                               shape_string(y.shape()));
    }
    Tensor out({n});
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += x[r * k + l] * y[l];
      out[r] = s;
    }
    return a.tape().record("matmul", std::move(out), inputs,
                           [ia, ib, n, k](const Tensor& g, GradBuffer& gs) {
                             const Tensor& xv = gs.value(ia);
                             const Tensor& yv = gs.value(ib);
                             if (Tensor* ga = gs.slot(ia)) {
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t l = 0; l < k; ++l) (*ga)[r * k + l] += g[r] * yv[l];
                             }
                             if (Tensor* gb = gs.slot(ib)) {
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t l = 0; l < k; ++l) (*gb)[l] += xv[r * k + l] * g[r];
                             }
                           });
  }

  require_rank("matmul", y, 2);
  if (y.rows() != k) {
    shape_fail("matmul", "inner dimensions differ " + shape_string(x.shape()) + " x " +
                             shape_string(y.shape()));
  }
  const std::size_t m = y.cols();
  Tensor out({n, m});
  const bool par = a.tape().parallel() && n * k * m >= kParallelWork;
  gemm_accumulate(x.values().data(), y.values().data(), out.values().data(), n, k, m, par);
  return a.tape().record(
      "matmul", std::move(out), inputs, [ia, ib, n, k, m, par](const Tensor& g, GradBuffer& gs) {
        const Tensor& xv = gs.value(ia);
        const Tensor& yv = gs.value(ib);
        if (Tensor* ga = gs.slot(ia)) {
          gemm_nt_accumulate(g.values().data(), yv.values().data(), ga->values().data(), n, m, k, par);
        }
        if (Tensor* gb = gs.slot(ib)) {
          gemm_tn_accumulate(xv.values().data(), g.values().data(), gb->values().data(), n, k, m, par);
        }
      });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Tensor& first = parts.front().value();
  if (first.rank() != 1 && first.rank() != 2) {
    shape_fail("concat", "inputs must be rank 1 or 2, got " + shape_string(first.shape()));
  }
  const std::size_t rows = first.rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    if (t.rank() != first.rank() || t.rows() != rows) {
      shape_fail("concat", "incompatible shapes " + shape_string(first.shape()) + " and " +
                               shape_string(t.shape()));
    }
    widths.push_back(t.cols());
    ids.push_back(p.id());
    total += t.cols();
  }
  Shape shape = first.rank() == 2 ? Shape{rows, total} : Shape{total};
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[p]; ++c) out[r * total + offset + c] = t[r * widths[p] + c];
    offset += widths[p];
  }
  return parts.front().tape().record(
      "concat", std::move(out), parts,
      [ids, widths, rows, total](const Tensor& g, GradBuffer& gs) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (Tensor* gp = gs.slot(ids[p])) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[p]; ++c)
                (*gp)[r * widths[p] + c] += g[r * total + off + c];
          }
          off += widths[p];
        }
      });
}

Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (shape_numel(shape) != x.size()) {
    shape_fail("reshape", shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.storage());
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("reshape", std::move(out), inputs, [ia](const Tensor& g, GradBuffer& gs) {
    if (Tensor* ga = gs.slot(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Activations

Var elu(Var a) {
  return unary("elu", a, [](double x) -> std::pair<double, double> {
    if (x > 0.0) return {x, 1.0};
    const double e = std::exp(x);
    return {e - 1.0, e};
  });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) -> std::pair<double, double> {
    const double y = std::tanh(x);
    return {y, 1.0 - y * y};
  });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, [slope](double x) -> std::pair<double, double> {
    return x > 0.0 ? std::pair{x, 1.0} : std::pair{slope * x, slope};
  });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) -> std::pair<double, double> {
    return x > 0.0 ? std::pair{x, 1.0} : std::pair{0.0, 0.0};
  });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) -> std::pair<double, double> {
    const double y = std::exp(x);
    return {y, y};
  });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericFault("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, [](double x) -> std::pair<double, double> {
    return {std::log(x), 1.0 / x};
  });
}

// ---------------------------------------------------------------------------
// Graph primitives

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    shape_fail("gather_rows", "expected rank 1 or 2, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.rank() == 2 ? x.rows() : x.size();
  const std::size_t m = x.rank() == 2 ? x.cols() : 1;
  for (std::size_t r : rows) {
    if (r >= n) shape_fail("gather_rows", "row " + std::to_string(r) + " out of range " + std::to_string(n));
  }
  Shape shape = x.rank() == 2 ? Shape{rows.size(), m} : Shape{rows.size()};
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < m; ++c) out[i * m + c] = x[rows[i] * m + c];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("gather_rows", std::move(out), inputs,
                         [ia, idx = std::move(idx), m](const Tensor& g, GradBuffer& gs) {
                           if (Tensor* ga = gs.slot(ia)) {
                             for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t c = 0; c < m; ++c) (*ga)[idx[i] * m + c] += g[i * m + c];
                           }
                         });
}

Var sum_segments(Var a, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    shape_fail("sum_segments", "expected rank 1 or 2, got " + shape_string(x.shape()));
  }
  const std::size_t e = x.rank() == 2 ? x.rows() : x.size();
  const std::size_t m = x.rank() == 2 ? x.cols() : 1;
  check_segments("sum_segments", segment, e, num_segments);
  Shape shape = x.rank() == 2 ? Shape{num_segments, m} : Shape{num_segments};
  Tensor out(shape);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t c = 0; c < m; ++c) out[segment[i] * m + c] += x[i * m + c];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("sum_segments", std::move(out), inputs,
                         [ia, seg = std::move(seg), m](const Tensor& g, GradBuffer& gs) {
                           if (Tensor* ga = gs.slot(ia)) {
                             for (std::size_t i = 0; i < seg.size(); ++i)
                               for (std::size_t c = 0; c < m; ++c) (*ga)[i * m + c] += g[seg[i] * m + c];
                           }
                         });
}

Var softmax_over_segments(Var scores, std::span<const std::size_t> segment,
                          std::size_t num_segments) {
  const Tensor& x = scores.value();
  require_rank("softmax_over_segments", x, 1);
  check_segments("softmax_over_segments", segment, x.size(), num_segments);
  std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < x.size(); ++i) seg_max[segment[i]] = std::max(seg_max[segment[i]], x[i]);
  std::vector<double> seg_sum(num_segments, 0.0);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - seg_max[segment[i]]);
    seg_sum[segment[i]] += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= seg_sum[segment[i]];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = scores.id();
  const std::size_t self = scores.tape().size();
  const Var inputs[] = {scores};
  return scores.tape().record(
      "softmax_over_segments", std::move(out), inputs,
      [ia, self, seg = std::move(seg), num_segments](const Tensor& g, GradBuffer& gs) {
        Tensor* ga = gs.slot(ia);
        if (!ga) return;
        const Tensor& y = gs.value(self);
        std::vector<double> inner(num_segments, 0.0);
        for (std::size_t i = 0; i < seg.size(); ++i) inner[seg[i]] += y[i] * g[i];
        for (std::size_t i = 0; i < seg.size(); ++i) (*ga)[i] += y[i] * (g[i] - inner[seg[i]]);
      });
}

Var scale_rows(Var a, Var weights) {
  const Tensor& x = a.value();
  const Tensor& w = weights.value();
  require_rank("scale_rows", x, 2);
  require_rank("scale_rows", w, 1);
  if (w.size() != x.rows()) {
    shape_fail("scale_rows", "weights " + shape_string(w.shape()) + " for rows of " +
                                 shape_string(x.shape()));
  }
  const std::size_t e = x.rows(), m = x.cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = x[r * m + c] * w[r];
  const std::size_t ia = a.id(), iw = weights.id();
  const Var inputs[] = {a, weights};
  return a.tape().record("scale_rows", std::move(out), inputs,
                         [ia, iw, e, m](const Tensor& g, GradBuffer& gs) {
                           const Tensor& xv = gs.value(ia);
                           const Tensor& wv = gs.value(iw);
                           if (Tensor* ga = gs.slot(ia)) {
                             for (std::size_t r = 0; r < e; ++r)
                               for (std::size_t c = 0; c < m; ++c) (*ga)[r * m + c] += g[r * m + c] * wv[r];
                           }
                           if (Tensor* gw = gs.slot(iw)) {
                             for (std::size_t r = 0; r < e; ++r) {
                               double s = 0.0;
                               for (std::size_t c = 0; c < m; ++c) s += g[r * m + c] * xv[r * m + c];
                               (*gw)[r] += s;
                             }
                           }
                         });
}

Var batch_norm(Var x, Var gamma, Var beta, const BatchNormStats& running, bool training,
               BatchNormStats* observed, double eps) {
  const Tensor& xv = x.value();
  require_rank("batch_norm", xv, 2);
  const std::size_t n = xv.rows(), m = xv.cols();
  const Shape feat{m};
  if (gamma.value().shape() != feat || beta.value().shape() != feat) {
    shape_fail("batch_norm", "affine parameters must have shape " + shape_string(feat));
  }
  if (n == 0) shape_fail("batch_norm", "empty input");

  std::vector<double> mean(m, 0.0), inv_std(m, 0.0);
  if (training) {
    std::vector<double> var(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) mean[c] += xv[r * m + c];
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        const double d = xv[r * m + c] - mean[c];
        var[c] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(n);
    for (std::size_t c = 0; c < m; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    if (observed) {
      observed->mean = Tensor::vector(mean);
      std::vector<double> unbiased(var);
      if (n > 1)
        for (double& v : unbiased) v *= static_cast<double>(n) / static_cast<double>(n - 1);
      observed->var = Tensor::vector(std::move(unbiased));
    }
  } else {
    if (running.mean.shape() != feat || running.var.shape() != feat) {
      shape_fail("batch_norm", "running statistics must have shape " + shape_string(feat));
    }
    for (std::size_t c = 0; c < m; ++c) {
      mean[c] = running.mean[c];
      inv_std[c] = 1.0 / std::sqrt(running.var[c] + eps);
    }
  }

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (xv[r * m + c] - mean[c]) * inv_std[c];
      xhat[r * m + c] = h;
      out[r * m + c] = gv[c] * h + bv[c];
    }

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Var inputs[] = {x, gamma, beta};
  return x.tape().record(
      "batch_norm", std::move(out), inputs,
      [ix, ig, ib, n, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](
          const Tensor& g, GradBuffer& gs) {
        const Tensor& gam = gs.value(ig);
        if (Tensor* gb = gs.slot(ib)) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) (*gb)[c] += g[r * m + c];
        }
        if (Tensor* gg = gs.slot(ig)) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) (*gg)[c] += g[r * m + c] * xhat[r * m + c];
        }
        Tensor* gx = gs.slot(ix);
        if (!gx) return;
        if (!training) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) (*gx)[r * m + c] += g[r * m + c] * gam[c] * inv_std[c];
          return;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < m; ++c) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            const double gh = g[r * m + c] * gam[c];
            sum_g += gh;
            sum_gh += gh * xhat[r * m + c];
          }
          for (std::size_t r = 0; r < n; ++r) {
            const double gh = g[r * m + c] * gam[c];
            (*gx)[r * m + c] +=
                inv_std[c] * inv_n * (static_cast<double>(n) * gh - sum_g - xhat[r * m + c] * sum_gh);
          }
        }
      });
}

Var l2_normalize(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 1 && x.rank() != 2) {
    shape_fail("l2_normalize", "expected rank 1 or 2, got " + shape_string(x.shape()));
  }
  const std::size_t rows = x.rows(), m = x.cols();
  std::vector<double> norms(rows, 0.0);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += x[r * m + c] * x[r * m + c];
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      if (a.tape().strict()) throw NumericFault("l2_normalize: zero vector in strict mode");
      for (std::size_t c = 0; c < m; ++c) out[r * m + c] = 0.0;
    } else {
      for (std::size_t c = 0; c < m; ++c) out[r * m + c] = x[r * m + c] / norms[r];
    }
  }
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  const Var inputs[] = {a};
  return a.tape().record(
      "l2_normalize", std::move(out), inputs,
      [ia, self, rows, m, norms = std::move(norms)](const Tensor& g, GradBuffer& gs) {
        Tensor* ga = gs.slot(ia);
        if (!ga) return;
        const Tensor& y = gs.value(self);
        for (std::size_t r = 0; r < rows; ++r) {
          if (norms[r] == 0.0) {
            for (std::size_t c = 0; c < m; ++c) (*ga)[r * m + c] += g[r * m + c];
            continue;
          }
          double yg = 0.0;
          for (std::size_t c = 0; c < m; ++c) yg += y[r * m + c] * g[r * m + c];
          for (std::size_t c = 0; c < m; ++c)
            (*ga)[r * m + c] += (g[r * m + c] - y[r * m + c] * yg) / norms[r];
        }
      });
}

Var dot(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("dot", x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return a.tape().record("dot", Tensor::scalar(s), inputs, [ia, ib](const Tensor& g, GradBuffer& gs) {
    const double go = g[0];
    const Tensor& xv = gs.value(ia);
    const Tensor& yv = gs.value(ib);
    if (Tensor* ga = gs.slot(ia))
      for (std::size_t i = 0; i < xv.size(); ++i) (*ga)[i] += go * yv[i];
    if (Tensor* gb = gs.slot(ib))
      for (std::size_t i = 0; i < xv.size(); ++i) (*gb)[i] += go * xv[i];
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("sum", Tensor::scalar(s), inputs, [ia](const Tensor& g, GradBuffer& gs) {
    if (Tensor* ga = gs.slot(ia))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
  });
}

Var logsumexp(Var a) {
  const Tensor& x = a.value();
  require_rank("logsumexp", x, 1);
  if (x.size() == 0) shape_fail("logsumexp", "empty input");
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double s = 0.0;
  for (double v : x.values()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  Tensor weights(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) weights[i] = std::exp(x[i] - lse);
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("logsumexp", Tensor::scalar(lse), inputs,
                         [ia, weights = std::move(weights)](const Tensor& g, GradBuffer& gs) {
                           if (Tensor* ga = gs.slot(ia))
                             for (std::size_t i = 0; i < weights.size(); ++i) (*ga)[i] += g[0] * weights[i];
                         });
}

Var l2_norm(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  const double r = std::sqrt(s);
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return a.tape().record("l2_norm", Tensor::scalar(r), inputs, [ia, r](const Tensor& g, GradBuffer& gs) {
    Tensor* ga = gs.slot(ia);
    if (!ga || r == 0.0) return;
    const Tensor& xv = gs.value(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) (*ga)[i] += g[0] * xv[i] / r;
  });
}

// ---------------------------------------------------------------------------
// gradcheck

double gradcheck(const std::function<Var(Var)>& f, const Tensor& x, double h) {
  const Tensor xs[] = {x};
  return gradcheck([&f](std::span<const Var> v) { return f(v[0]); }, xs, h);
}

double gradcheck(const std::function<Var(std::span<const Var>)>& f, std::span<const Tensor> xs,
                 double h, std::size_t max_coords, unsigned seed) {
  if (!(h > 0.0)) throw ConfigError("gradcheck: step must be positive");
  try {
    std::vector<Tensor> analytic;
    {
      Tape tape;
      std::vector<Var> vars;
      for (const Tensor& x : xs) vars.push_back(tape.parameter(x));
      const Var out = f(vars);
      const Gradients grads = tape.backward(out);
      for (const Var& v : vars) analytic.push_back(grads[v]);
    }
    auto evaluate = [&](const std::vector<Tensor>& inputs) {
      Tape tape;
      std::vector<Var> vars;
      for (const Tensor& x : inputs) vars.push_back(tape.constant(x));
      return f(vars).value().item();
    };

    std::mt19937 rng(seed);
    double worst = 0.0;
    std::vector<Tensor> probe(xs.begin(), xs.end());
    for (std::size_t t = 0; t < xs.size(); ++t) {
      std::vector<std::size_t> coords(xs[t].size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      if (max_coords != 0 && max_coords < coords.size()) {
        std::vector<std::size_t> picked;
        std::sample(coords.begin(), coords.end(), std::back_inserter(picked), max_coords, rng);
        coords = std::move(picked);
      }
      for (std::size_t i : coords) {
        const double orig = probe[t][i];
        probe[t][i] = orig + h;
        const double fp = evaluate(probe);
        probe[t][i] = orig - h;
        const double fm = evaluate(probe);
        probe[t][i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[t][i];
        worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      }
    }
    return worst;
  } catch (const NumericFault&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace semloc::ad
