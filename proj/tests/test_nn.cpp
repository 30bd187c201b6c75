#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskprop/nn/adam.hpp"
#include "maskprop/nn/ops.hpp"
#include "maskprop/rng.hpp"

using namespace maskprop;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = false,
                     double scale = 1.0) {
  std::vector<double> data(nn::numel_of(shape));
  for (auto& x : data) x = rng.normal(0.0, scale);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// Central-difference check of d(f)/d(x) against the tape gradient.
template <typename F>
void gradcheck(F f, Tensor& x, double h = 1e-6, double tol = 1e-6) {
  Tensor y = f();
  nn::GradMap gm = nn::backward(y);
  Tensor gx = gm.at(x);
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double fp = f().value();
    x.data()[i] = orig - h;
    const double fm = f().value();
    x.data()[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double an = gx.data()[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    CHECK(std::abs(fd - an) / denom < tol);
  }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  Tensor x = random_tensor({2, 3}, rng, true);
  gradcheck([&] { return nn::sum_all(nn::mul(x, x)); }, x);
  gradcheck([&] { return nn::mean_all(nn::sigmoid(x)); }, x, 1e-6, 1e-5);
  gradcheck([&] { return nn::sum_all(nn::leaky_relu(x, 0.2)); }, x);
  gradcheck([&] { return nn::sum_all(nn::log_(nn::add_scalar(nn::mul(x, x), 1.0))); }, x);
  gradcheck([&] { return nn::sum_all(nn::sqrt_(nn::add_scalar(nn::mul(x, x), 0.5))); }, x);
  gradcheck([&] { return nn::sum_all(nn::recip(nn::add_scalar(nn::mul(x, x), 1.0))); }, x);
}

TEST_CASE("reduction and broadcast ops match finite differences") {
  Rng rng(2);
  Tensor x = random_tensor({3, 2, 4, 4}, rng, true);
  gradcheck([&] { return nn::mean_all(nn::square(nn::sum_per_sample(x))); }, x);
  gradcheck([&] { return nn::sum_all(nn::square(nn::sum_ch_keep1(x))); }, x);
  gradcheck([&] { return nn::sum_all(nn::square(nn::bcast_ch1(nn::sum_ch_keep1(x), 3))); }, x);
  gradcheck([&] { return nn::sum_all(nn::square(nn::upsample_nearest2(x))); }, x);
  gradcheck([&] { return nn::sum_all(nn::square(nn::downsample_sum2(x))); }, x);
  Tensor b = random_tensor({2}, rng, true);
  gradcheck([&] { return nn::sum_all(nn::square(nn::add(x, nn::bcast_channel_full(b, 3, 4, 4)))); },
            b);
}

TEST_CASE("conv2d forward matches a direct loop") {
  Rng rng(3);
  Tensor x = random_tensor({2, 3, 6, 6}, rng);
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor y = nn::conv2d(x, w, 2, 1, 1);
  REQUIRE(y.shape() == std::vector<int>{2, 4, 3, 3});
  // direct evaluation at a few positions
  auto xv = [&](int n, int c, int yy, int xx) -> double {
    if (yy < 0 || yy >= 6 || xx < 0 || xx >= 6) return 0.0;
    return x.data()[((n * 3 + c) * 6 + yy) * 6 + xx];
  };
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 4; ++oc)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double acc = 0.0;
          for (int ic = 0; ic < 3; ++ic)
            for (int r = 0; r < 3; ++r)
              for (int s = 0; s < 3; ++s)
                acc += w.data()[((oc * 3 + ic) * 3 + r) * 3 + s] *
                       xv(n, ic, oy * 2 - 1 + r, ox * 2 - 1 + s);
          const double got = y.data()[((n * 4 + oc) * 3 + oy) * 3 + ox];
          CHECK(std::abs(acc - got) < 1e-12);
        }
}

TEST_CASE("conv ops match finite differences") {
  Rng rng(4);
  Tensor x = random_tensor({2, 2, 4, 4}, rng, true);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, true);
  Tensor b = random_tensor({3}, rng, true);
  gradcheck([&] { return nn::sum_all(nn::square(nn::conv_bias(x, w, b, 1, 1, 1))); }, x, 1e-6,
            1e-5);
  gradcheck([&] { return nn::sum_all(nn::square(nn::conv_bias(x, w, b, 1, 1, 1))); }, w, 1e-6,
            1e-5);
  gradcheck([&] { return nn::sum_all(nn::square(nn::conv2d(x, w, 2, 1, 1))); }, w, 1e-6, 1e-5);
  // rectangular kernels as used by the global-convolution branches
  Tensor wk = random_tensor({2, 2, 5, 1}, rng, true);
  gradcheck([&] { return nn::sum_all(nn::square(nn::conv2d(x, wk, 1, 2, 0))); }, wk, 1e-6, 1e-5);
}

TEST_CASE("second-order: gradient-of-gradient matches finite differences") {
  // phi(w) = || d/dx sum(leaky(conv(x, w))) ||^2; check d phi / d w by FD.
  Rng rng(5);
  Tensor x = random_tensor({1, 2, 4, 4}, rng, true);
  Tensor w = random_tensor({2, 2, 3, 3}, rng, true);
  auto phi = [&] {
    Tensor y = nn::sum_all(nn::leaky_relu(nn::conv2d(x, w, 1, 1, 1), 0.2));
    nn::GradMap gm = nn::backward(y);
    Tensor gx = gm.at(x);
    return nn::sum_all(nn::square(gx));
  };
  gradcheck(phi, w, 1e-6, 1e-4);
}

TEST_CASE("detach cuts the tape") {
  Rng rng(6);
  Tensor x = random_tensor({2, 2}, rng, true);
  Tensor y = nn::sum_all(nn::square(nn::mul(x, x).detach()));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adam steps leave parameters finite and reduce a quadratic") {
  Rng rng(7);
  nn::ParamStore params;
  Tensor p = params.add("p", {4}, {1.0, -2.0, 3.0, -4.0});
  nn::Adam adam(0.9, 0.999);
  double prev = 1e300;
  for (int i = 0; i < 200; ++i) {
    Tensor loss = nn::sum_all(nn::square(p));
    nn::GradMap gm = nn::backward(loss);
    adam.step(params, gm, 0.05);
    prev = loss.value();
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("adam state round-trips through serialize/deserialize") {
  nn::ParamStore pa, pb;
  Tensor a = pa.add("p", {2}, {1.0, 2.0});
  Tensor b = pb.add("p", {2}, {1.0, 2.0});
  nn::Adam oa(0.5, 0.999), ob(0.5, 0.999);
  for (int i = 0; i < 3; ++i) {
    nn::GradMap ga = nn::backward(nn::sum_all(nn::square(a)));
    oa.step(pa, ga, 0.01);
  }
  ob.deserialize(pb, oa.serialize(pa));
  pb.tensor(0).data() = pa.tensor(0).data();
  nn::GradMap ga = nn::backward(nn::sum_all(nn::square(a)));
  nn::GradMap gb = nn::backward(nn::sum_all(nn::square(b)));
  oa.step(pa, ga, 0.01);
  ob.step(pb, gb, 0.01);
  CHECK(pa.tensor(0).data() == pb.tensor(0).data());
}
