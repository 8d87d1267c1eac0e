// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uncurl/tensor.hpp"

namespace uncurl {

namespace detail {
struct Node {
  Tensor value;
  std::optional<Tensor> grad;
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};
}  // namespace detail

/// Handle to a value recorded on the reverse-mode graph. Copies share the node.
/// Leaves created with `parameter` accumulate gradients across backward calls
/// until `zero_grad`; interior gradients are recomputed on every backward.
class Var {
 public:
  Var() = default;

  static Var parameter(Tensor value);
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimizers; only valid on leaves.
  Tensor& mutable_value();

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.has_value(); }
  const Tensor& grad() const;
  void zero_grad();

  bool valid() const noexcept { return node_ != nullptr; }
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

  static Var from_op(std::string op, Tensor value, std::vector<Var> inputs,
                     std::function<void(detail::Node&)> backward);

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Populates gradients of every requires_grad leaf reachable from `loss`.
/// Throws std::invalid_argument if `loss` is not a single element.
void backward(const Var& loss);

// Op vocabulary. Shapes are checked; mismatches throw std::invalid_argument.
Var matmul(const Var& a, const Var& b);            // [M,K] x [K,N]
Var matvec(const Var& a, const Var& x);            // [M,K] x [K]
Var add(const Var& a, const Var& b);               // same shape
Var sub(const Var& a, const Var& b);               // same shape
Var mul(const Var& a, const Var& b);               // elementwise, same shape
Var add_row(const Var& a, const Var& bias);        // [M,N] + [N]
Var scale(const Var& a, double factor);
Var mul_mask(const Var& a, const Tensor& mask);    // elementwise by a constant
Var relu(const Var& a);
Var log_softmax_rows(const Var& a);                // over the last axis of [M,N]
Var embedding(const Var& table, std::span<const std::size_t> indices, std::size_t group);
Var take_rows(const Var& a, std::span<const std::size_t> rows);
Var pick(const Var& a, std::span<const std::size_t> cols);   // out[i] = a[i, cols[i]]
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
Var weighted_sum(const Var& a, const Tensor& weights);        // sum w * a

/// Central finite-difference check of `loss_fn` against backward(). Returns
/// the maximum relative error |g - g_fd| / max(|g|, |g_fd|, floor) over every
/// entry of every parameter. `loss_fn` must rebuild the graph from the current
/// parameter values on each call.
double gradient_check(const std::function<Var()>& loss_fn, std::span<Var> params, double step = 1e-5,
                      double floor = 1e-6);

}  // namespace uncurl
