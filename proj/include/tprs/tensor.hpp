#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tprs {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One node of the dynamic computation record. Ops append nodes whose
// backward_fn pulls this->grad and accumulates into the parents' grad.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-d array with reverse-mode gradient tracking. Handle semantics:
// copying a Tensor aliases the same underlying node. Values are doubles;
// gradient checks assume 64-bit precision throughout.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_node(std::shared_ptr<detail::Node> n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }

  double item() const;
  double operator()(int i) const { return node_->value[static_cast<size_t>(i)]; }
  double& operator()(int i) { return node_->value[static_cast<size_t>(i)]; }
  double operator()(int i, int j) const;
  double& operator()(int i, int j);
  double operator()(int i, int j, int k) const;
  double& operator()(int i, int j, int k);

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  // Reverse-mode sweep from this node, which must be a scalar.
  void backward();

  // Value copy detached from the graph.
  Tensor detach() const;

  bool all_finite() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

}  // namespace tprs
