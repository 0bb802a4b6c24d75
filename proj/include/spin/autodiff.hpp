#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "spin/tensor.hpp"

namespace spin {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while its
// Tape is alive.
class Value {
 public:
  Value() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  const Tensor& data() const;
  const Shape& shape() const { return data().shape(); }
  bool requires_grad() const;
  // Gradient accumulated by Tape::backward. Zero tensor if the node received none.
  const Tensor& grad() const;

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Record of one forward pass. Nodes are appended in evaluation order, so
// reverse insertion order is a valid topological order for backward.
class Tape {
 public:
  // Called with the output gradient; accumulates into parents via grad_of().
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor data, bool requires_grad = true);
  Value constant(Tensor data) { return leaf(std::move(data), false); }

  // Appends an op result. Throws NumericError on non-finite data. The
  // backprop closure is dropped when no parent needs a gradient.
  Value record(Tensor data, std::span<const Value> parents, Backprop backprop);

  // Reverse sweep from a scalar root. A second call without reset_gradients()
  // throws TapeError.
  void backward(const Value& root);
  void reset_gradients();

  const Tensor& data(const Value& v) const;
  bool requires_grad(const Value& v) const;
  const Tensor& grad(const Value& v) const;
  // Mutable gradient buffer, allocated on first use. Only for backprop closures.
  Tensor& grad_of(const Value& v);

  std::size_t size() const { return nodes_.size(); }
  bool owns(const Value& v) const { return v.tape_ == this && v.id_ < nodes_.size(); }

 private:
  struct Node {
    Tensor data;
    Tensor grad;  // empty until touched
    bool requires_grad = false;
    Backprop backprop;
  };

  const Node& node(const Value& v) const;
  Node& node(const Value& v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must live on the same tape. Unless
// noted, "matrix" means the row/column view of Shape (leading axes flattened).

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double factor);
Value relu(const Value& a);
Value abs(const Value& a);
Value reshape(const Value& a, Shape shape);

// [M,K] x [K,N] -> [M,N]
Value matmul(const Value& a, const Value& b);
// x [M,K] * w [K,N] + bias [N] broadcast over rows.
Value linear(const Value& x, const Value& w, const Value& bias);
Value add_row_vector(const Value& x, const Value& row);

// Column-wise concatenation of matrices with equal row counts.
Value concat_cols(std::span<const Value> parts);
// Rows [begin, end) of a matrix.
Value slice_rows(const Value& a, std::size_t begin, std::size_t end);
// out[r] = a[index[r]]
Value gather_rows(const Value& a, std::span<const std::size_t> index);
// out has out_rows rows, zero except out[index[r]] += a[r].
Value scatter_add_rows(const Value& a, std::span<const std::size_t> index, std::size_t out_rows);
// out[r] = a[r] * factor[r]; factors are constants.
Value scale_rows(const Value& a, std::span<const double> factor);

Value sum(const Value& a);
Value mean(const Value& a);

// Softmax along the last axis, independently per row, with max subtraction.
// Throws EmptySetError when the last axis has length zero.
Value softmax_stable(const Value& logits);

}  // namespace spin
