#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskprop/nn/tensor.hpp"
#include "maskprop/rng.hpp"

namespace maskprop::nn {

// Named trainable leaves with a stable order.
class ParamStore {
 public:
  Tensor add(const std::string& name, std::vector<int> shape, std::vector<double> init);
  // He-style init for conv weights feeding a leaky nonlinearity.
  Tensor add_conv(const std::string& name, int oc, int ic, int kh, int kw, Rng& rng);
  Tensor add_zeros(const std::string& name, std::vector<int> shape);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor find(const std::string& name) const;
  std::int64_t total_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

class GradMap;

class Adam {
 public:
  Adam(double beta1, double beta2, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, GradMap& grads, double lr);

  std::int64_t steps_taken() const { return t_; }
  // Flat state for checkpointing: [t, m..., v...] per parameter order.
  std::vector<double> serialize(const ParamStore& params) const;
  void deserialize(const ParamStore& params, const std::vector<double>& blob);

 private:
  void ensure(const ParamStore& params);
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace maskprop::nn
