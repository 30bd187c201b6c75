#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "maskprop/error.hpp"

namespace maskprop::nn {

class Tensor;
struct Node;

// Reverse-mode tape node. The vjp of every operation is itself built from
// tape operations, so gradients are ordinary tensors and can be
// differentiated again (needed by the gradient penalty).
struct Node {
  std::vector<int> shape;
  std::vector<double> v;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Maps the output adjoint to one adjoint per parent (undefined = no grad).
  std::function<std::vector<Tensor>(const Tensor&)> vjp;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor from(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  std::int64_t numel() const;
  int dim(int i) const { return n_->shape[i]; }

  double value() const;  // scalar tensors only
  std::vector<double>& data() { return n_->v; }
  const std::vector<double>& data() const { return n_->v; }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  // Same data, fresh leaf; cuts the tape.
  Tensor detach(bool requires_grad = false) const;

  Node* node() const { return n_.get(); }
  std::shared_ptr<Node> ptr() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

std::int64_t numel_of(const std::vector<int>& shape);

Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&)> vjp);

class GradMap {
 public:
  bool contains(const Tensor& t) const { return g_.count(t.node()) != 0; }
  // Gradient of the differentiated scalar w.r.t. t; zeros if t was unreached.
  Tensor at(const Tensor& t) const;
  void set(Node* n, Tensor grad) { g_[n] = std::move(grad); }
  Tensor* find(Node* n) {
    auto it = g_.find(n);
    return it == g_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<Node*, Tensor> g_;
};

// Reverse-mode sweep from a scalar root. The returned gradients are tape
// tensors connected to the inputs, so a second backward() through them is
// valid.
GradMap backward(const Tensor& root);

}  // namespace maskprop::nn
