#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maskprop/losses.hpp"
#include "maskprop/nn/bridge.hpp"
#include "maskprop/regressor.hpp"

using namespace maskprop;
using nn::Tensor;

namespace {

// Independent per-pixel evaluation of the balanced cross entropy, kept free
// of any tensor machinery on purpose.
double bce_oracle(const std::vector<std::vector<double>>& preds,
                  const std::vector<std::vector<double>>& gts, double eps = 1e-7) {
  const double k = static_cast<double>(preds.size());
  double total = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const auto& p = preds[t];
    const auto& g = gts[t];
    double bg = 0.0;
    for (double y : g) bg += y == 0.0 ? 1.0 : 0.0;
    const double beta = bg / static_cast<double>(g.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double pc = std::min(1.0 - eps, std::max(eps, p[j]));
      total += beta * g[j] * std::log(pc) + (1.0 - beta) * (1.0 - g[j]) * std::log(1.0 - pc);
    }
  }
  return -total / k;
}

Tensor row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor::from({1, 1, 1, n}, std::move(v));
}

}  // namespace

TEST_CASE("compute_beta") {
  Mask m = make_mask(2, 2);
  m.at(0, 0) = 1.0;
  CHECK(compute_beta(m) == 0.75);
  CHECK(compute_beta(make_mask(2, 2, 1.0)) == 0.0);
  CHECK(compute_beta(make_mask(2, 2, 0.0)) == 1.0);
}

TEST_CASE("balanced_bce reproduces the worked 2x2 example") {
  Tensor pred = row({0.5, 0.5, 0.5, 0.5});
  Tensor gt = row({1.0, 0.0, 0.0, 0.0});
  const double loss = balanced_bce({pred}, {gt}).value();
  CHECK(std::abs(loss - 1.5 * std::log(2.0)) <= 1e-9);
}

TEST_CASE("balanced_bce vanishes for perfect predictions") {
  Tensor pred = row({1.0, 0.0, 0.0, 0.0});
  Tensor gt = row({1.0, 0.0, 0.0, 0.0});
  const double loss = balanced_bce({pred}, {gt}).value();
  CHECK(loss >= 0.0);
  CHECK(loss <= 4 * std::abs(std::log(1.0 - 1e-7)) * 1.001);
}

TEST_CASE("balanced_bce is invariant to joint pixel permutations") {
  Tensor pred = row({0.9, 0.2, 0.6, 0.3});
  Tensor gt = row({1.0, 0.0, 1.0, 0.0});
  Tensor pred_p = row({0.3, 0.6, 0.2, 0.9});
  Tensor gt_p = row({0.0, 1.0, 0.0, 1.0});
  CHECK(balanced_bce({pred}, {gt}).value() ==
        doctest::Approx(balanced_bce({pred_p}, {gt_p}).value()).epsilon(1e-12));
}

TEST_CASE("balanced_bce matches the loop oracle on random small windows") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(3));
    const int h = 1 + static_cast<int>(rng.below(3));
    const int w = 1 + static_cast<int>(rng.below(3));
    std::vector<Tensor> preds, gts;
    std::vector<std::vector<double>> praw, graw;
    for (int t = 0; t < k; ++t) {
      std::vector<double> p(static_cast<std::size_t>(h) * w), g(p.size());
      for (auto& x : p) x = rng.uniform();
      for (auto& x : g) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
      preds.push_back(Tensor::from({1, 1, h, w}, p));
      gts.push_back(Tensor::from({1, 1, h, w}, g));
      praw.push_back(p);
      graw.push_back(g);
    }
    const double got = balanced_bce(preds, gts).value();
    const double want = bce_oracle(praw, graw);
    CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("balanced_bce refuses non-binary targets") {
  Tensor pred = row({0.5, 0.5, 0.5, 0.5});
  Tensor gt = row({0.9, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(balanced_bce({pred}, {gt}), ShapeError);
}

TEST_CASE("gradient penalty: closed forms for linear critics") {
  Tensor real = Tensor::from({1, 4}, {0.1, 0.2, 0.3, 0.4});
  Tensor fake = Tensor::from({1, 4}, {0.5, 0.6, 0.7, 0.8});

  CriticFn sum_critic = [](const Tensor& x) { return nn::sum_per_sample(x); };
  const double gp_sum = gradient_penalty_with_eps(sum_critic, real, fake, {0.3}).value();
  CHECK(std::abs(gp_sum - 1.0) <= 1e-6);  // gradient all-ones, norm 2

  Tensor w = Tensor::from({1, 4}, {0.5, 0.5, 0.5, 0.5});  // unit L2 norm
  CriticFn unit_critic = [w](const Tensor& x) { return nn::sum_per_sample(nn::mul(x, w)); };
  const double gp_unit = gradient_penalty_with_eps(unit_critic, real, fake, {0.7}).value();
  CHECK(std::abs(gp_unit) <= 1e-6);

  CriticFn const_critic = [](const Tensor& x) { return nn::scale(nn::sum_per_sample(x), 0.0); };
  const double gp_const = gradient_penalty_with_eps(const_critic, real, fake, {0.5}).value();
  CHECK(std::abs(gp_const - 1.0) <= 1e-6);
}

TEST_CASE("gradient penalty is swap-invariant for matched epsilon draws") {
  Rng rng(22);
  Tensor real = Tensor::from({2, 6}, {0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6, 0.5, 0.5, 0.6, 0.4});
  Tensor fake = Tensor::from({2, 6}, {0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4, 0.5, 0.5, 0.4, 0.6});
  Tensor w = Tensor::from({2, 6}, {0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.3, -0.2, 0.5, 0.1, -0.4, 0.2});
  CriticFn critic = [w](const Tensor& x) { return nn::sum_per_sample(nn::mul(x, w)); };
  const std::vector<double> eps{0.25, 0.65};
  const std::vector<double> flipped{0.75, 0.35};
  const double a = gradient_penalty_with_eps(critic, real, fake, eps).value();
  const double b = gradient_penalty_with_eps(critic, fake, real, flipped).value();
  CHECK(a == b);  // identical interpolation points
}

TEST_CASE("spatial terms: constant critic gives gap 0, gp 1, L_S = -lambda_gp") {
  Rng rng(23);
  CriticSpec spec;
  spec.num_down = 2;
  spec.base_channels = 4;
  Critic critic(spec, rng);
  for (std::size_t i = 0; i < critic.params().size(); ++i)
    for (auto& v : critic.params().tensor(i).data()) v = 0.0;
  critic.params().find("final.b").data()[0] = 3.25;  // constant score

  std::vector<Tensor> frames, gts, preds;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> f(3 * 16 * 16), g(16 * 16), p(16 * 16);
    for (auto& x : f) x = rng.uniform();
    for (auto& x : g) x = rng.bernoulli(0.3) ? 1.0 : 0.0;
    for (auto& x : p) x = rng.uniform();
    frames.push_back(Tensor::from({1, 3, 16, 16}, f));
    gts.push_back(Tensor::from({1, 1, 16, 16}, g));
    preds.push_back(Tensor::from({1, 1, 16, 16}, p));
  }
  WganTerms terms = spatial_loss_terms(critic, frames, gts, preds, rng);
  CHECK(std::abs(terms.gap.value()) <= 1e-12);
  CHECK(std::abs(terms.gp.value() - 1.0) <= 1e-6);
  TrainConfig cfg;
  const double l_s = terms.gap.value() - cfg.lambda_gp * terms.gp.value();
  CHECK(std::abs(l_s - (-10.0)) <= 1e-6);

  LossBreakdown b = assemble_losses(0.0, terms.gap.value(), terms.gp.value(), 0.0, 1.0, cfg);
  CHECK(std::abs(b.total_critic_s - 10.0) <= 1e-6);
}

TEST_CASE("gap is zero when predictions equal the real masks") {
  Rng rng(24);
  CriticSpec sp;
  sp.num_down = 2;
  sp.base_channels = 4;
  Critic critic_s(sp, rng);
  CriticSpec tp = sp;
  tp.input_channels = 6;
  Critic critic_t(tp, rng);
  std::vector<Tensor> frames, masks;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> f(3 * 16 * 16), g(16 * 16);
    for (auto& x : f) x = rng.uniform();
    for (auto& x : g) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    frames.push_back(Tensor::from({1, 3, 16, 16}, f));
    masks.push_back(Tensor::from({1, 1, 16, 16}, g));
  }
  WganTerms s = spatial_loss_terms(critic_s, frames, masks, masks, rng, /*with_gp=*/false);
  CHECK(std::abs(s.gap.value()) <= 1e-12);
  WganTerms t = temporal_loss_terms(critic_t, frames, masks, masks, rng, /*with_gp=*/false);
  CHECK(std::abs(t.gap.value()) <= 1e-12);
}

TEST_CASE("temporal terms enforce the window/critic channel contract") {
  Rng rng(25);
  CriticSpec tp;
  tp.num_down = 2;
  tp.base_channels = 4;
  tp.input_channels = 12;  // K = 4
  Critic critic(tp, rng);
  std::vector<Tensor> frames{Tensor::zeros({1, 3, 16, 16})}, masks{Tensor::zeros({1, 1, 16, 16})};
  CHECK_THROWS_AS(temporal_loss_terms(critic, frames, masks, masks, rng), ShapeError);
}

TEST_CASE("assemble_losses reductions") {
  TrainConfig cfg;
  cfg.lambda_s = 0.0;
  cfg.lambda_t = 0.0;
  LossBreakdown b = assemble_losses(0.37, 1.5, 0.5, -2.0, 0.25, cfg);
  CHECK(b.total_regressor == doctest::Approx(cfg.lambda_ce * 0.37).epsilon(1e-15));

  TrainConfig defaults;
  LossBreakdown z = assemble_losses(0.0, 0.0, 0.0, 0.0, 0.0, defaults);
  CHECK(z.total_regressor == 0.0);
  CHECK(z.total_critic_s == 0.0);
  CHECK(z.total_critic_t == 0.0);
}

TEST_CASE("losses are covariant under batch permutation") {
  Rng rng(26);
  std::vector<double> p(2 * 16 * 16), g(2 * 16 * 16);
  for (auto& x : p) x = rng.uniform();
  for (auto& x : g) x = rng.bernoulli(0.3) ? 1.0 : 0.0;
  std::vector<double> p_swapped(p.begin() + 16 * 16, p.end());
  p_swapped.insert(p_swapped.end(), p.begin(), p.begin() + 16 * 16);
  std::vector<double> g_swapped(g.begin() + 16 * 16, g.end());
  g_swapped.insert(g_swapped.end(), g.begin(), g.begin() + 16 * 16);

  Tensor pred = Tensor::from({2, 1, 16, 16}, p);
  Tensor gt = Tensor::from({2, 1, 16, 16}, g);
  Tensor pred_s = Tensor::from({2, 1, 16, 16}, p_swapped);
  Tensor gt_s = Tensor::from({2, 1, 16, 16}, g_swapped);
  CHECK(balanced_bce({pred}, {gt}).value() ==
        doctest::Approx(balanced_bce({pred_s}, {gt_s}).value()).epsilon(1e-12));
}

TEST_CASE("analytic gradient of total_regressor w.r.t. a predicted mask matches FD") {
  Rng rng(27);
  CriticSpec sp;
  sp.num_down = 2;
  sp.base_channels = 4;
  Critic critic_s(sp, rng);
  CriticSpec tp = sp;
  tp.input_channels = 6;
  Critic critic_t(tp, rng);
  TrainConfig cfg;

  std::vector<Tensor> frames, gts;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> f(3 * 16 * 16), g(16 * 16);
    for (auto& x : f) x = rng.uniform();
    for (auto& x : g) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    frames.push_back(Tensor::from({1, 3, 16, 16}, f));
    gts.push_back(Tensor::from({1, 1, 16, 16}, g));
  }
  std::vector<double> p1(16 * 16), p2(16 * 16);
  for (auto& x : p1) x = rng.uniform(0.15, 0.85);
  for (auto& x : p2) x = rng.uniform(0.15, 0.85);
  Tensor pred1 = Tensor::from({1, 1, 16, 16}, p1, /*requires_grad=*/true);
  Tensor pred2 = Tensor::from({1, 1, 16, 16}, p2);

  auto total = [&] {
    std::vector<Tensor> preds{pred1, pred2};
    Tensor ce = balanced_bce(preds, gts);
    WganTerms s = spatial_loss_terms(critic_s, frames, gts, preds, rng, /*with_gp=*/false);
    WganTerms t = temporal_loss_terms(critic_t, frames, gts, preds, rng, /*with_gp=*/false);
    return nn::add(nn::scale(ce, cfg.lambda_ce),
                   nn::add(nn::scale(s.gap, cfg.lambda_s), nn::scale(t.gap, cfg.lambda_t)));
  };
  nn::GradMap gm = nn::backward(total());
  Tensor grad = gm.at(pred1);
  Rng pick(99);
  for (int i = 0; i < 50; ++i) {
    const std::size_t idx = pick.below(grad.data().size());
    const double h = 1e-6;
    const double orig = pred1.data()[idx];
    pred1.data()[idx] = orig + h;
    const double fp = total().value();
    pred1.data()[idx] = orig - h;
    const double fm = total().value();
    pred1.data()[idx] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double an = grad.data()[idx];
    CHECK(std::abs(fd - an) <= 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-8}));
  }
}

TEST_CASE("gradient of the weighted CE through a K=2 rollout matches FD on parameters") {
  Rng rng(29);
  RegressorSpec rs;
  rs.encoder_channels = {8, 12};
  rs.num_stages = 2;
  rs.global_conv_kernel = 5;
  rs.skip_reduction = 8;
  rs.last_decoder_channels = 8;
  rs.base_image_size = 16;
  Regressor reg(rs, rng);
  TrainConfig cfg;

  std::vector<Tensor> frames, gts;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> f(3 * 16 * 16), g(16 * 16);
    for (auto& x : f) x = rng.uniform();
    for (auto& x : g) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    frames.push_back(Tensor::from({1, 3, 16, 16}, f));
    gts.push_back(Tensor::from({1, 1, 16, 16}, g));
  }
  Tensor ref = Tensor::from({1, 4, 16, 16}, std::vector<double>(4 * 16 * 16, 0.3));
  Tensor prior = gts[0].detach();
  auto loss = [&] {
    auto roll = reg.rollout(frames, ref, prior, SkipState::none());
    return nn::scale(balanced_bce(roll.preds, gts), cfg.lambda_ce);
  };
  nn::GradMap gm = nn::backward(loss());
  Rng pick(29000);
  int checked = 0;
  while (checked < 30) {
    Tensor p = reg.params().tensor(pick.below(reg.params().size()));
    const std::size_t idx = pick.below(p.data().size());
    const double h = 1e-6, orig = p.data()[idx];
    p.data()[idx] = orig + h;
    const double fp = loss().value();
    p.data()[idx] = orig - h;
    const double fm = loss().value();
    p.data()[idx] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double an = gm.at(p).data()[idx];
    if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
    CHECK(std::abs(fd - an) <= 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-8}));
    ++checked;
  }
}

TEST_CASE("one small regressor step decreases total_regressor (descent sanity)") {
  Rng rng(28);
  RegressorSpec rs;
  rs.encoder_channels = {8, 12};
  rs.num_stages = 2;
  rs.global_conv_kernel = 5;
  rs.skip_reduction = 8;
  rs.last_decoder_channels = 8;
  rs.base_image_size = 16;
  Regressor reg(rs, rng);
  CriticSpec sp;
  sp.num_down = 2;
  sp.base_channels = 4;
  Critic critic_s(sp, rng);
  CriticSpec tp = sp;
  tp.input_channels = 6;
  Critic critic_t(tp, rng);
  TrainConfig cfg;

  std::vector<Tensor> frames, gts;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> f(3 * 16 * 16), g(16 * 16);
    for (auto& x : f) x = rng.uniform();
    for (auto& x : g) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    frames.push_back(Tensor::from({1, 3, 16, 16}, f));
    gts.push_back(Tensor::from({1, 1, 16, 16}, g));
  }
  Tensor ref = Tensor::from({1, 4, 16, 16}, std::vector<double>(4 * 16 * 16, 0.5));
  Tensor prior = gts[0].detach();

  auto total = [&] {
    auto roll = reg.rollout(frames, ref, prior, SkipState::none());
    Tensor ce = balanced_bce(roll.preds, gts);
    WganTerms s = spatial_loss_terms(critic_s, frames, gts, roll.preds, rng, /*with_gp=*/false);
    WganTerms t = temporal_loss_terms(critic_t, frames, gts, roll.preds, rng, /*with_gp=*/false);
    return nn::add(nn::scale(ce, cfg.lambda_ce),
                   nn::add(nn::scale(s.gap, cfg.lambda_s), nn::scale(t.gap, cfg.lambda_t)));
  };
  Tensor before = total();
  nn::GradMap gm = nn::backward(before);
  nn::Adam adam(cfg.adam_beta1, cfg.adam_beta2);
  adam.step(reg.params(), gm, 1e-6);
  CHECK(total().value() < before.value());
}
