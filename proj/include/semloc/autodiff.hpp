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

#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every primitive application in creation order, which is a
// topological order. Backward walks the tape once from the output to the
// leaves. Vars are cheap handles (tape pointer + node index) and are only
// valid while their tape is alive.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semloc/tensor.hpp"

namespace semloc::ad {

class Tape;

class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar output with respect to the tape's parameter leaves.
class Gradients {
 public:
  /// Throws if `leaf` was not created with Tape::parameter.
  const Tensor& operator[](Var leaf) const;
  bool contains(Var leaf) const { return grads_.count(leaf.id()) != 0; }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

// Per-node gradient storage used while running a backward pass.
class GradBuffer {
 public:
  /// Accumulator for node `id`, zero-initialised on first use; nullptr when
  /// nothing upstream of `id` requires a gradient.
  Tensor* slot(std::size_t id);
  /// Forward value of node `id`.
  const Tensor& value(std::size_t id) const;

 private:
  friend class Tape;
  explicit GradBuffer(const Tape& tape);

  const Tape& tape_;
  std::vector<Tensor> grads_;
  std::vector<bool> touched_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, GradBuffer& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is reported by backward().
  Var parameter(Tensor value);

  /// Appends a primitive application. Validates that the value is finite.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// d output / d leaf for every parameter leaf. `output` must be a scalar.
  Gradients backward(Var output) const;

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }

  // In strict mode guarded degeneracies (zero-vector normalisation) throw.
  bool strict() const noexcept { return strict_; }
  void set_strict(bool strict) noexcept { strict_ = strict; }

  // Large matmuls split their rows across OpenMP threads when set. Results
  // are bit-identical to the serial path.
  bool parallel() const noexcept { return parallel_; }
  void set_parallel(bool parallel) noexcept { parallel_ = parallel; }

 private:
  friend class GradBuffer;

  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
  bool strict_ = false;
  bool parallel_ = false;
};

// ---------------------------------------------------------------------------
// Primitives. All inputs must live on the same tape.

Var add(Var a, Var b);  // same shape, or (n x m) + (m) row broadcast
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var matmul(Var a, Var b);  // (n x k)(k x m) or (n x k)(k)
Var concat(std::span<const Var> parts);  // along the last axis
Var reshape(Var a, Shape shape);

Var elu(Var a);  // alpha = 1
Var tanh(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);

// Row selection and segment reductions used for message passing.
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var sum_segments(Var a, std::span<const std::size_t> segment, std::size_t num_segments);
Var softmax_over_segments(Var scores, std::span<const std::size_t> segment,
                          std::size_t num_segments);
Var scale_rows(Var a, Var weights);  // (E x m) rows scaled by (E)

struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

/// Batch normalisation over the rows of an (n x m) input. In training mode
/// the batch statistics are used and written to `observed` (mean and
/// unbiased variance); otherwise the running statistics are applied.
Var batch_norm(Var x, Var gamma, Var beta, const BatchNormStats& running, bool training,
               BatchNormStats* observed = nullptr, double eps = 1e-5);

/// Unit-normalises the last axis. Zero rows pass through unchanged, or throw
/// NumericFault when the tape is strict.
Var l2_normalize(Var a);

Var dot(Var a, Var b);  // scalar
Var sum(Var a);         // scalar
Var logsumexp(Var a);   // scalar over a vector
Var l2_norm(Var a);     // scalar; subgradient 0 at the origin

// ---------------------------------------------------------------------------
// Finite-difference checking.

/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|) using central
/// differences with step h. Returns +Inf on a numeric fault.
double gradcheck(const std::function<Var(Var)>& f, const Tensor& x, double h = 1e-5);

/// Multi-input variant. When `max_coords` is non-zero only that many
/// coordinates per input are probed, chosen with `seed`.
double gradcheck(const std::function<Var(std::span<const Var>)>& f, std::span<const Tensor> xs,
                 double h = 1e-5, std::size_t max_coords = 0, unsigned seed = 0);

}  // namespace semloc::ad
