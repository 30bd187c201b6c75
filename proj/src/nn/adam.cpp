#include "maskprop/nn/adam.hpp"

#include <cmath>

#include "maskprop/error.hpp"

namespace maskprop::nn {

Tensor ParamStore::add(const std::string& name, std::vector<int> shape,
                       std::vector<double> init) {
  for (const auto& n : names_)
    if (n == name) throw Error("duplicate parameter name: " + name);
  Tensor t = Tensor::from(std::move(shape), std::move(init), /*requires_grad=*/true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParamStore::add_conv(const std::string& name, int oc, int ic, int kh, int kw, Rng& rng) {
  const int fan_in = ic * kh * kw;
  const double stddev = std::sqrt(2.0 / fan_in);
  std::vector<double> init(static_cast<std::size_t>(oc) * ic * kh * kw);
  for (auto& x : init) x = rng.normal(0.0, stddev);
  return add(name, {oc, ic, kh, kw}, std::move(init));
}

Tensor ParamStore::add_zeros(const std::string& name, std::vector<int> shape) {
  std::vector<double> init(numel_of(shape), 0.0);
  return add(name, std::move(shape), std::move(init));
}

Tensor ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return tensors_[i];
  throw Error("parameter not found: " + name);
}

std::int64_t ParamStore::total_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

void Adam::ensure(const ParamStore& params) {
  if (!m_.empty()) return;
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(params.tensor(i).numel(), 0.0);
    v_[i].assign(params.tensor(i).numel(), 0.0);
  }
}

void Adam::step(ParamStore& params, GradMap& grads, double lr) {
  ensure(params);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensor(i);
    Tensor* g = grads.find(p.node());
    auto& pm = m_[i];
    auto& pv = v_[i];
    auto& pd = p.data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      const double gj = g ? g->data()[j] : 0.0;
      pm[j] = beta1_ * pm[j] + (1.0 - beta1_) * gj;
      pv[j] = beta2_ * pv[j] + (1.0 - beta2_) * gj * gj;
      pd[j] -= lr * (pm[j] / bc1) / (std::sqrt(pv[j] / bc2) + eps_);
    }
  }
}

std::vector<double> Adam::serialize(const ParamStore& params) const {
  std::vector<double> blob;
  blob.push_back(static_cast<double>(t_));
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      blob.insert(blob.end(), static_cast<std::size_t>(params.tensor(i).numel()) * 2, 0.0);
    }
    return blob;
  }
  for (const auto& m : m_) blob.insert(blob.end(), m.begin(), m.end());
  for (const auto& v : v_) blob.insert(blob.end(), v.begin(), v.end());
  return blob;
}

void Adam::deserialize(const ParamStore& params, const std::vector<double>& blob) {
  std::size_t expect = 1;
  for (std::size_t i = 0; i < params.size(); ++i)
    expect += static_cast<std::size_t>(params.tensor(i).numel()) * 2;
  if (blob.size() != expect) throw Error("adam state size mismatch");
  t_ = static_cast<std::int64_t>(blob[0]);
  m_.resize(params.size());
  v_.resize(params.size());
  std::size_t off = 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(params.tensor(i).numel());
    m_[i].assign(blob.begin() + off, blob.begin() + off + n);
    off += n;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(params.tensor(i).numel());
    v_[i].assign(blob.begin() + off, blob.begin() + off + n);
    off += n;
  }
}

}  // namespace maskprop::nn
