#include "maskprop/losses.hpp"

#include <cmath>
#include <sstream>

#include "maskprop/error.hpp"

namespace maskprop {

using nn::Tensor;

bool LossBreakdown::finite() const {
  for (double v : {ce, spatial, temporal, gp_spatial, gp_temporal, total_regressor,
                   total_critic_s, total_critic_t})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string LossBreakdown::csv_header() {
  return "ce,spatial,temporal,gp_spatial,gp_temporal,total_regressor,total_critic_s,"
         "total_critic_t";
}

std::string LossBreakdown::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << ce << ',' << spatial << ',' << temporal << ',' << gp_spatial << ',' << gp_temporal << ','
     << total_regressor << ',' << total_critic_s << ',' << total_critic_t;
  return os.str();
}

double compute_beta(const Mask& gt_mask) {
  if (!is_binary(gt_mask)) throw ShapeError("compute_beta: mask is not binary");
  const double total = static_cast<double>(gt_mask.numel());
  const double fg = static_cast<double>(foreground_count(gt_mask));
  return (total - fg) / total;
}

namespace {

// Per-sample beta from a [N,1,H,W] binary tensor. Rejects non-binary
// targets: the overwrite/noise tricks must never reach the supervised loss.
std::vector<double> betas_of(const Tensor& gt) {
  const int n = gt.dim(0);
  const std::size_t per = static_cast<std::size_t>(gt.numel() / n);
  std::vector<double> betas(n);
  for (int i = 0; i < n; ++i) {
    double fg = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double y = gt.data()[i * per + j];
      if (y != 0.0 && y != 1.0) throw ShapeError("balanced_bce: gt mask is not binary");
      fg += y;
    }
    betas[i] = (static_cast<double>(per) - fg) / static_cast<double>(per);
  }
  return betas;
}

}  // namespace

nn::Tensor balanced_bce(const std::vector<Tensor>& pred_window,
                        const std::vector<Tensor>& gt_window, double eps_clamp) {
  if (pred_window.empty() || pred_window.size() != gt_window.size())
    throw ShapeError("balanced_bce: window length mismatch");
  const int k = static_cast<int>(pred_window.size());
  const int n = pred_window[0].dim(0);
  Tensor acc;
  for (int t = 0; t < k; ++t) {
    const Tensor& pred = pred_window[t];
    const Tensor& gt = gt_window[t];
    if (pred.shape() != gt.shape()) throw ShapeError("balanced_bce: pred/gt shape mismatch");
    const auto betas = betas_of(gt);
    const std::size_t per = static_cast<std::size_t>(gt.numel() / n);
    std::vector<double> wf(gt.data().size()), wb(gt.data().size());
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < per; ++j) {
        const double y = gt.data()[i * per + j];
        wf[i * per + j] = betas[i] * y;
        wb[i * per + j] = (1.0 - betas[i]) * (1.0 - y);
      }
    Tensor weight_fg = Tensor::from(gt.shape(), std::move(wf));
    Tensor weight_bg = Tensor::from(gt.shape(), std::move(wb));
    Tensor p1 = nn::clamp(pred, eps_clamp, 1.0 - eps_clamp);
    Tensor p0 = nn::add_scalar(nn::neg(p1), 1.0);
    Tensor term = nn::add(nn::mul(weight_fg, nn::log_(p1)), nn::mul(weight_bg, nn::log_(p0)));
    Tensor s = nn::sum_all(term);
    acc = acc.defined() ? nn::add(acc, s) : s;
  }
  return nn::scale(acc, -1.0 / (static_cast<double>(k) * n));
}

nn::Tensor gradient_penalty_with_eps(const CriticFn& critic, const nn::Tensor& real,
                                     const nn::Tensor& fake, const std::vector<double>& eps) {
  if (real.shape() != fake.shape()) throw ShapeError("gradient_penalty: real/fake shape mismatch");
  const int n = real.dim(0);
  if (static_cast<int>(eps.size()) != n)
    throw ShapeError("gradient_penalty: need one epsilon per sample");
  const std::size_t per = static_cast<std::size_t>(real.numel() / n);
  std::vector<double> mix(real.data().size());
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j)
      mix[i * per + j] =
          eps[i] * real.data()[i * per + j] + (1.0 - eps[i]) * fake.data()[i * per + j];
  Tensor x_tilde = Tensor::from(real.shape(), std::move(mix), /*requires_grad=*/true);

  Tensor scores = critic(x_tilde);
  if (!scores.requires_grad())
    throw Error("gradient_penalty: critic output does not depend on its input");
  Tensor per_sample = nn::mean_per_sample(scores);  // [N]
  nn::GradMap gm = nn::backward(nn::sum_all(per_sample));
  Tensor g = gm.at(x_tilde);
  // Tiny floor keeps sqrt differentiable when the gradient vanishes.
  Tensor sq = nn::add_scalar(nn::sum_per_sample(nn::square(g)), 1e-24);
  Tensor norms = nn::sqrt_(sq);
  return nn::mean_all(nn::square(nn::add_scalar(norms, -1.0)));
}

nn::Tensor gradient_penalty(const CriticFn& critic, const nn::Tensor& real,
                            const nn::Tensor& fake, Rng& rng) {
  std::vector<double> eps(real.dim(0));
  for (auto& e : eps) e = rng.uniform();
  return gradient_penalty_with_eps(critic, real, fake, eps);
}

namespace {

WganTerms wgan_terms(const Critic& critic, const std::vector<Tensor>& reals,
                     const std::vector<Tensor>& fakes, Rng& rng, bool with_gp) {
  const double inv_k = 1.0 / static_cast<double>(reals.size());
  Tensor gap, gp;
  for (std::size_t t = 0; t < reals.size(); ++t) {
    Tensor g = nn::sub(nn::mean_all(critic.score(reals[t])), nn::mean_all(critic.score(fakes[t])));
    gap = gap.defined() ? nn::add(gap, g) : g;
    if (with_gp) {
      Tensor p = gradient_penalty([&critic](const Tensor& x) { return critic.score(x); },
                                  reals[t], fakes[t], rng);
      gp = gp.defined() ? nn::add(gp, p) : p;
    }
  }
  WganTerms out;
  out.gap = nn::scale(gap, inv_k);
  if (with_gp) out.gp = nn::scale(gp, inv_k);
  return out;
}

}  // namespace

WganTerms spatial_loss_terms(const Critic& critic, const std::vector<Tensor>& frames,
                             const std::vector<Tensor>& real_masks,
                             const std::vector<Tensor>& pred_masks, Rng& rng, bool with_gp) {
  if (frames.size() != real_masks.size() || frames.size() != pred_masks.size() || frames.empty())
    throw ShapeError("spatial_loss_terms: window length mismatch");
  std::vector<Tensor> reals, fakes;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    reals.push_back(mask_image(frames[t], real_masks[t]).detach());
    fakes.push_back(mask_image(frames[t], pred_masks[t]));
  }
  return wgan_terms(critic, reals, fakes, rng, with_gp);
}

WganTerms temporal_loss_terms(const Critic& critic, const std::vector<Tensor>& frames,
                              const std::vector<Tensor>& real_masks,
                              const std::vector<Tensor>& pred_masks, Rng& rng, bool with_gp) {
  if (frames.size() != real_masks.size() || frames.size() != pred_masks.size() || frames.empty())
    throw ShapeError("temporal_loss_terms: window length mismatch");
  if (static_cast<int>(frames.size()) * 3 != critic.spec().input_channels)
    throw ShapeError("temporal_loss_terms: window length does not match critic input channels");
  std::vector<Tensor> reals, fakes;  // oldest first
  for (std::size_t t = 0; t < frames.size(); ++t) {
    reals.push_back(mask_image(frames[t], real_masks[t]).detach());
    fakes.push_back(mask_image(frames[t], pred_masks[t]));
  }
  Tensor real_stack = nn::concat_ch(reals);
  Tensor fake_stack = nn::concat_ch(fakes);
  WganTerms out;
  out.gap = nn::sub(nn::mean_all(critic.score(real_stack)), nn::mean_all(critic.score(fake_stack)));
  if (with_gp)
    out.gp = gradient_penalty([&critic](const Tensor& x) { return critic.score(x); }, real_stack,
                              fake_stack, rng);
  return out;
}

LossBreakdown assemble_losses(double ce, double gap_s, double gp_s, double gap_t, double gp_t,
                              const TrainConfig& config) {
  LossBreakdown b;
  b.ce = ce;
  b.spatial = gap_s;
  b.temporal = gap_t;
  b.gp_spatial = gp_s;
  b.gp_temporal = gp_t;
  b.total_regressor = config.lambda_ce * ce + config.lambda_s * gap_s + config.lambda_t * gap_t;
  b.total_critic_s = -gap_s + config.lambda_gp * gp_s;
  b.total_critic_t = -gap_t + config.lambda_gp * gp_t;
  return b;
}

}  // namespace maskprop
