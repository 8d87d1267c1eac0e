// SPDX-License-Identifier: Apache-2.0
#include "uncurl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "uncurl/distribution.hpp"

namespace uncurl {

using detail::Node;

namespace {

Tensor& grad_of(Node& n) {
  if (!n.grad) n.grad = Tensor(n.value.shape(), 0.0);
  return *n.grad;
}

void require(bool cond, const std::string& op, const std::string& what) {
  if (!cond) throw std::invalid_argument(op + ": " + what);
}

void require_same_shape(const Var& a, const Var& b, const std::string& op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

void require_rank(const Var& a, std::size_t rank, const std::string& op) {
  require(a.value().rank() == rank, op,
          "expected rank " + std::to_string(rank) + ", got shape " + shape_to_string(a.shape()));
}

std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // children before parents
}

}  // namespace

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->value.check_finite("parameter");
  node->requires_grad = true;
  node->op = "parameter";
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->value.check_finite("constant");
  node->op = "constant";
  return Var(std::move(node));
}

Tensor& Var::mutable_value() {
  if (!node_->inputs.empty()) throw std::logic_error("mutable_value on a non-leaf variable");
  return node_->value;
}

const Tensor& Var::grad() const {
  if (!node_->grad) throw std::logic_error("variable has no gradient; call backward first");
  return *node_->grad;
}

void Var::zero_grad() {
  if (node_->grad) node_->grad->fill(0.0);
}

Var Var::from_op(std::string op, Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  value.check_finite(op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  for (auto& in : inputs) {
    node->requires_grad = node->requires_grad || in.requires_grad();
    node->inputs.push_back(in.node_);
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.valid() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.valid() ? shape_to_string(loss.shape()) : std::string("<null>")));
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return;
  const auto order = topological_order(root);
  for (Node* n : order) {
    if (n->inputs.empty()) {
      grad_of(*n);
    } else {
      n->grad = Tensor(n->value.shape(), 0.0);
    }
  }
  grad_of(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul", "inner dimensions " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * bv.at(p, j);
    }
  }
  return Var::from_op("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    const Tensor& g = *self.grad;
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& ga = grad_of(an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * bn.value.at(p, j);
          ga.at(i, p) += acc;
        }
    }
    if (bn.requires_grad) {
      Tensor& gb = grad_of(bn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an.value.at(i, p);
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * g.at(i, j);
        }
    }
  });
}

Var matvec(const Var& a, const Var& x) {
  require_rank(a, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  require(x.shape()[0] == k, "matvec", "shape mismatch " + shape_to_string(a.shape()) + " x " + shape_to_string(x.shape()));
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a.value().at(i, p) * x.value()[p];
    out[i] = acc;
  }
  return Var::from_op("matvec", std::move(out), {a, x}, [m, k](Node& self) {
    const Tensor& g = *self.grad;
    Node& an = *self.inputs[0];
    Node& xn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& ga = grad_of(an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += g[i] * xn.value[p];
    }
    if (xn.requires_grad) {
      Tensor& gx = grad_of(xn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) gx[p] += an.value.at(i, p) * g[i];
    }
  });
}

namespace {

template <class Forward, class GradA, class GradB>
Var elementwise_binary(const std::string& op, const Var& a, const Var& b, Forward f, GradA da, GradB db) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i], b.value()[i]);
  return Var::from_op(op, std::move(out), {a, b}, [da, db](Node& self) {
    const Tensor& g = *self.grad;
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& ga = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(an.value[i], bn.value[i]);
    }
    if (bn.requires_grad) {
      Tensor& gb = grad_of(bn);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(an.value[i], bn.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return elementwise_binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var add_row(const Var& a, const Var& bias) {
  require_rank(a, 2, "add_row");
  require_rank(bias, 1, "add_row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  require(bias.shape()[0] == n, "add_row", "bias length mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bias.value()[j];
  return Var::from_op("add_row", std::move(out), {a, bias}, [m, n](Node& self) {
    const Tensor& g = *self.grad;
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& ga = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn.requires_grad) {
      Tensor& gb = grad_of(bn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return Var::from_op("scale", std::move(out), {a}, [factor](Node& self) {
    Node& an = *self.inputs[0];
    Tensor& ga = grad_of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * (*self.grad)[i];
  });
}

Var mul_mask(const Var& a, const Tensor& mask) {
  require(a.shape() == mask.shape(), "mul_mask",
          "mask shape " + shape_to_string(mask.shape()) + " vs " + shape_to_string(a.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return Var::from_op("mul_mask", std::move(out), {a}, [mask](Node& self) {
    Tensor& ga = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += mask[i] * (*self.grad)[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Var::from_op("relu", std::move(out), {a}, [](Node& self) {
    Node& an = *self.inputs[0];
    Tensor& ga = grad_of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (an.value[i] > 0.0) ga[i] += (*self.grad)[i];
    }
  });
}

Var log_softmax_rows(const Var& a) {
  require_rank(a, 2, "log_softmax_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  require(n > 0, "log_softmax_rows", "empty rows");
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = log_softmax(a.value().row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return Var::from_op("log_softmax", std::move(out), {a}, [m, n](Node& self) {
    // d/dz_j of sum_k g_k (z_k - lse) = g_j - softmax_j * sum_k g_k
    Tensor& ga = grad_of(*self.inputs[0]);
    const Tensor& g = *self.grad;
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g.at(i, j);
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) - std::exp(self.value.at(i, j)) * gsum;
    }
  });
}

Var embedding(const Var& table, std::span<const std::size_t> indices, std::size_t group) {
  require_rank(table, 2, "embedding");
  require(group > 0 && indices.size() % group == 0, "embedding", "index count not a multiple of group size");
  const std::size_t vocab = table.shape()[0], width = table.shape()[1];
  const std::size_t rows = indices.size() / group;
  for (std::size_t idx : indices) require(idx < vocab, "embedding", "index " + std::to_string(idx) + " out of range");
  Tensor out({rows, group * width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = table.value().row(indices[i]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Var::from_op("embedding", std::move(out), {table}, [idx = std::move(idx), width](Node& self) {
    Tensor& gt = grad_of(*self.inputs[0]);
    const Tensor& g = *self.grad;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < width; ++c) gt.at(idx[i], c) += g[i * width + c];
  });
}

Var take_rows(const Var& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "take_rows");
  const std::size_t n = a.shape()[1];
  for (std::size_t r : rows) require(r < a.shape()[0], "take_rows", "row index out of range");
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = a.value().row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Var::from_op("take_rows", std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
    Tensor& ga = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(idx[i], j) += self.grad->at(i, j);
  });
}

Var pick(const Var& a, std::span<const std::size_t> cols) {
  require_rank(a, 2, "pick");
  const std::size_t m = a.shape()[0];
  require(cols.size() == m, "pick", "need one column per row");
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    require(cols[i] < a.shape()[1], "pick", "column index out of range");
    out[i] = a.value().at(i, cols[i]);
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return Var::from_op("pick", std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Tensor& ga = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.at(i, idx[i]) += (*self.grad)[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return Var::from_op("sum", Tensor::scalar(total), {a}, [](Node& self) {
    Tensor& ga = grad_of(*self.inputs[0]);
    const double g = (*self.grad)[0];
    for (double& v : ga.data()) v += g;
  });
}

Var mean(const Var& a) {
  require(a.size() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_squares(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v * v;
  return Var::from_op("sum_squares", Tensor::scalar(total), {a}, [](Node& self) {
    Node& an = *self.inputs[0];
    Tensor& ga = grad_of(an);
    const double g = (*self.grad)[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * an.value[i] * g;
  });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
  require(a.shape() == weights.shape(), "weighted_sum",
          "weights shape " + shape_to_string(weights.shape()) + " vs " + shape_to_string(a.shape()));
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) total += weights[i] * a.value()[i];
  }
  return Var::from_op("weighted_sum", Tensor::scalar(total), {a}, [weights](Node& self) {
    Tensor& ga = grad_of(*self.inputs[0]);
    const double g = (*self.grad)[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += weights[i] * g;
  });
}

double gradient_check(const std::function<Var()>& loss_fn, std::span<Var> params, double step, double floor) {
  for (Var& p : params) p.zero_grad();
  backward(loss_fn());
  double worst = 0.0;
  for (Var& p : params) {
    const Tensor analytic = p.grad();
    Tensor& value = p.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss_fn().value().item();
      value[i] = saved - step;
      const double down = loss_fn().value().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace uncurl
