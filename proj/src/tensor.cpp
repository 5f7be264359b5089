#include "symseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace symseg {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

static void check_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("Tensor: shape must have at least one axis");
  for (Index d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: shape axes must be positive, got " + shape_str(shape));
  }
}

Tensor Tensor::from_values(Shape shape, Eigen::ArrayXd values, bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_list(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  Eigen::ArrayXd v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(shape_size(shape));
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  Eigen::ArrayXd v = Eigen::ArrayXd::Constant(shape_size(shape), value);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Index Tensor::flat_index(const std::vector<Index>& idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw std::invalid_argument("Tensor: index rank mismatch");
  Index flat = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= s[i]) throw std::out_of_range("Tensor: index out of range");
    flat = flat * s[i] + idx[i];
  }
  return flat;
}

double Tensor::value_at(const std::vector<Index>& idx) const {
  return values()(flat_index(idx));
}

const Eigen::ArrayXd& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor: gradient not populated");
  return node()->grad;
}

void Tensor::zero_grad() {
  node()->grad.resize(0);
}

Tensor Tensor::detach() const {
  return from_values(shape(), values(), false);
}

Tensor Tensor::clone_leaf(bool requires_grad) const {
  return from_values(shape(), values(), requires_grad);
}

void backward(const Tensor& loss, bool retain_graph) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  auto root = loss.node_ptr();
  if (!root->requires_grad) return;

  // Reverse post-order DFS gives a topological order with every node
  // visited before its operands.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior nodes carry transient per-pass buffers so that a repeated
  // backward adds the same gradient again instead of compounding it;
  // only leaves accumulate across passes.
  for (detail::Node* node : order) {
    if (node->backward_fn) {
      node->ensure_grad();
      node->grad.setZero();
    }
  }

  root->ensure_grad();
  root->grad(0) += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }

  if (!retain_graph) {
    for (detail::Node* node : order) {
      node->parents.clear();
      node->backward_fn = nullptr;
    }
  }
}

}  // namespace symseg
