// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Dense tensors with an eager reverse-mode tape.
//
// Every op allocates a fresh result node that keeps shared references to its
// inputs and a closure that pushes the result gradient back into them. The
// graph is released when the last handle to the loss goes away. Two element
// types are instantiated: float (training) and double (gradient checks).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace genlip {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op is called outside its domain (empty loss mask, fully
/// masked softmax row, non-scalar loss, ...).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Global switch for tape recording. Off inside NoGradGuard scopes.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Empty span until a backward pass reached this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  const char* op() const { return node_->op; }
  /// Fresh leaf holding a copy of the values.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Backward closure for custom ops: receives the result gradient and the
/// input nodes (in the order given to make_result).
template <typename T>
using BackwardFn =
    std::function<void(std::span<const T> out_grad,
                       std::span<const std::shared_ptr<detail::Node<T>>> inputs)>;

/// Creates an op result. When any input requires grad and GradMode is on the
/// result is attached to the tape; otherwise the closure is dropped.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward);

/// Accumulates into an input gradient if that input participates in autodiff.
template <typename T>
inline T* grad_target(const std::shared_ptr<detail::Node<T>>& node) {
  return node->requires_grad ? node->grad_buffer().data() : nullptr;
}

// ---------------------------------------------------------------------------
// Ops. Matrices are row-major [rows, cols].

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
/// x[n,d] + b[d] broadcast over rows.
template <typename T> Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b);
/// x[n,d] * g[d] broadcast over rows.
template <typename T> Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& g);
/// Row i multiplied by the constant factors[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> factors);
/// x·w + b with w [in, out]; b may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);

template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

/// Mean over masked-in rows of -log softmax(logits)[target]. Masked-out rows
/// contribute neither loss nor gradient and their targets are never read.
template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits,
                               std::span<const std::int32_t> targets,
                               std::span<const std::uint8_t> loss_mask);

/// Rows of table[V,d] selected by ids.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

/// Reverse traversal from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are rebuilt on every call.
template <typename T> void backward(const Tensor<T>& loss);

}  // namespace genlip
