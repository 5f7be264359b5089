#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace symseg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the recorded computation. Edges point from a result to its
// operands; backward() walks them in reverse topological order.
struct Node {
  Shape shape;
  Eigen::ArrayXd values;
  Eigen::ArrayXd grad;  // empty until first touched by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() == 0) grad = Eigen::ArrayXd::Zero(values.size());
  }
};

}  // namespace detail

// Value-semantic handle to a dense float64 tensor participating in
// reverse-mode differentiation. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_values(Shape shape, Eigen::ArrayXd values, bool requires_grad = false);
  static Tensor from_list(Shape shape, std::initializer_list<double> values,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node()->shape; }
  Index ndim() const { return static_cast<Index>(node()->shape.size()); }
  Index size() const { return node()->values.size(); }
  bool is_scalar() const { return size() == 1; }

  const Eigen::ArrayXd& values() const { return node()->values; }
  // In-place access for leaf updates (optimizers, finite differences).
  // Mutating between a forward and its backward invalidates the gradients.
  Eigen::ArrayXd& values_mut() { return node()->values; }

  double value_at(const std::vector<Index>& idx) const;
  Index flat_index(const std::vector<Index>& idx) const;

  bool requires_grad() const { return node()->requires_grad; }
  bool has_grad() const { return node()->grad.size() > 0; }
  const Eigen::ArrayXd& grad() const;
  void zero_grad();

  // Copy of the values with no history and no gradient tracking.
  Tensor detach() const;
  // Deep copy that is a fresh differentiable leaf.
  Tensor clone_leaf(bool requires_grad = true) const;

  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node* node() const {
    if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
    return node_.get();
  }

  std::shared_ptr<detail::Node> node_;
};

// Runs reverse-mode accumulation from a one-element loss. Gradients add
// into any existing ones; call zero_grad() on leaves between iterations.
// The recorded graph is released afterwards unless retain_graph is set.
void backward(const Tensor& loss, bool retain_graph = false);

}  // namespace symseg
