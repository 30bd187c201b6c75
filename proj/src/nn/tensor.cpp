#include "maskprop/nn/tensor.hpp"

#include <unordered_set>

namespace maskprop::nn {

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
    throw ShapeError("tensor data size does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->v = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(numel_of(shape), value), requires_grad);
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

std::int64_t Tensor::numel() const { return numel_of(n_->shape); }

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value() requires a scalar tensor");
  return n_->v[0];
}

Tensor Tensor::detach(bool requires_grad) const {
  auto n = std::make_shared<Node>();
  n->shape = n_->shape;
  n->v = n_->v;
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&)> vjp) {
  if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
    throw ShapeError("op result size does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->v = std::move(data);
  for (const auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.ptr());
  }
  if (n->requires_grad) n->vjp = std::move(vjp);
  return Tensor(std::move(n));
}

Tensor GradMap::at(const Tensor& t) const {
  auto it = g_.find(t.node());
  if (it == g_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

namespace {

// Iterative post-order over parent edges; graphs get deep through rollouts.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

Tensor add_grads(const Tensor& a, const Tensor& b);

}  // namespace

GradMap backward(const Tensor& root) {
  if (root.numel() != 1) throw ShapeError("backward() requires a scalar root");
  GradMap gm;
  if (!root.requires_grad()) return gm;
  gm.set(root.node(), Tensor::full(root.shape(), 1.0));
  auto order = topo_order(root.node());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* nd = *it;
    Tensor* adj = gm.find(nd);
    if (adj == nullptr || !nd->vjp) continue;
    auto pgrads = nd->vjp(*adj);
    for (std::size_t i = 0; i < nd->parents.size(); ++i) {
      Node* p = nd->parents[i].get();
      if (!p->requires_grad || !pgrads[i].defined()) continue;
      Tensor* slot = gm.find(p);
      if (slot == nullptr)
        gm.set(p, pgrads[i]);
      else
        *slot = add_grads(*slot, pgrads[i]);
    }
  }
  return gm;
}

namespace {

// Local elementwise add so tensor.cpp does not depend on ops.cpp.
Tensor add_grads(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("gradient accumulation shape mismatch");
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](const Tensor& gy) { return std::vector<Tensor>{gy, gy}; });
}

}  // namespace

}  // namespace maskprop::nn
