#include "tprs/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tprs {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
  }
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data length does not match shape " +
                                shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on non-scalar tensor");
  return node_->value[0];
}

double Tensor::operator()(int i, int j) const {
  return node_->value[static_cast<size_t>(i) * node_->shape[1] + j];
}
double& Tensor::operator()(int i, int j) {
  return node_->value[static_cast<size_t>(i) * node_->shape[1] + j];
}
double Tensor::operator()(int i, int j, int k) const {
  const auto& s = node_->shape;
  return node_->value[(static_cast<size_t>(i) * s[1] + j) * s[2] + k];
}
double& Tensor::operator()(int i, int j, int k) {
  const auto& s = node_->shape;
  return node_->value[(static_cast<size_t>(i) * s[1] + j) * s[2] + k];
}

Tensor& Tensor::set_requires_grad(bool b) {
  node_->requires_grad = b;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() {
  if (numel() != 1) throw std::logic_error("backward() requires a scalar root");

  // Iterative DFS topological order over the grad-requiring subgraph.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->requires_grad) stack.push_back({node_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent == 0) {
      if (visited.count(f.node)) {
        stack.pop_back();
        continue;
      }
      visited.insert(f.node);
    }
    bool descended = false;
    while (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && f.next_parent >= f.node->parents.size()) {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor Tensor::detach() const {
  return from_data(node_->shape, node_->value, false);
}

bool Tensor::all_finite() const {
  for (double v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace tprs
