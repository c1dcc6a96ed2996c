#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "diffurec/rng.hpp"
#include "diffurec/tensor.hpp"

namespace diffurec {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid until the
/// tape is cleared or destroyed.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  Tensor tensor() const;
  double item() const;

  /// Adjoint after Tape::backward; empty when the value did not need one.
  std::span<const double> grad() const;

  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Define-by-run record of primitive operations for reverse-mode
/// differentiation. Single owner; one tape per thread.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order, so backward is a single reverse sweep. A non-recording tape keeps
/// values only, which is what inference uses.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose adjoint is kept on the tape (read it through Var::grad()).
  Var variable(Tensor value);
  /// Leaf bound to an external parameter. Backward adds the adjoint into
  /// `param.grad()`; the parameter must outlive the tape's use of it.
  Var param(Tensor& param);
  /// Read-only view of an external tensor; never receives gradient.
  Var view(const Tensor& value);

  /// Reverse sweep from a scalar loss. Throws ContractError when `loss` has
  /// more than one element.
  void backward(Var loss);

  /// Drops every node and saved intermediate.
  void clear();

  // Used by operation implementations.
  Var push(Shape shape, std::vector<double> value, bool needs_grad, BackwardFn fn);
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::uint32_t id) const;
  /// Adjoint buffer for `id`, allocated on first use.
  std::span<double> grad(std::uint32_t id);
  std::span<const double> grad_if_any(std::uint32_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    const Tensor* source = nullptr;
    Tensor* sink = nullptr;
    bool needs_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Binary elementwise ops accept either equal
// shapes or a right operand whose shape is a suffix of the left operand's
// shape (broadcast over the leading axes).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);

/// a[..., k] x b[k, n] -> [..., n]. Throws DimensionError naming both shapes.
Var matmul(Var a, Var b);
/// a[m, k] x b[n, k]^T -> [m, n].
Var matmul_nt(Var a, Var b);
/// Batched a[B, m, k] x b[B, k, n] (or b[B, n, k] when transpose_b).
Var bmm(Var a, Var b, bool transpose_b = false);

/// Max-subtracted softmax along `axis`.
Var softmax(Var x, std::size_t axis);
/// Normalises the last axis to zero mean / unit variance, then gain * x + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Inverted dropout; identity when !train or p == 0.
Var dropout(Var x, double p, bool train, Rng* rng);

Var reshape(Var x, Shape shape);
Var permute(Var x, const std::vector<std::size_t>& axes);
/// Rows of `table` for each index. Index 0 is the padding row: it yields a
/// zero vector and never receives gradient.
Var embedding_lookup(Var table, std::span<const int> indices);
/// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(Var table, std::size_t begin, std::size_t end);
/// Drops `axis` by taking position `index` along it.
Var select(Var x, std::size_t axis, std::size_t index);
/// Inserts a new axis at `axis` by repeating `x` n times.
Var expand(Var x, std::size_t axis, std::size_t n);

Var sum(Var x);
Var mean(Var x);
Var dot(Var a, Var b);

/// -log softmax(logits)[target] for rank-1 logits.
Var cross_entropy_logits(Var logits, int target);
/// Mean over rows of -log softmax(logits[b])[targets[b]] for rank-2 logits.
Var cross_entropy(Var logits, std::span<const int> targets);

// ---------------------------------------------------------------------------
// Plain-tensor conveniences (no gradient tracking).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
double cross_entropy_logits(const Tensor& logits, int target);

}  // namespace diffurec
