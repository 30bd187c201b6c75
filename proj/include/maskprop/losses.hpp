#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maskprop/core.hpp"
#include "maskprop/critics.hpp"
#include "maskprop/nn/ops.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

// Every scalar of one training step, for logging and the CSV loss log.
struct LossBreakdown {
  double ce = 0.0;
  double spatial = 0.0;   // spatial Wasserstein gap: mean D_S(real) - mean D_S(fake)
  double temporal = 0.0;  // temporal Wasserstein gap
  double gp_spatial = 0.0;
  double gp_temporal = 0.0;
  double total_regressor = 0.0;
  double total_critic_s = 0.0;
  double total_critic_t = 0.0;

  bool finite() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Background fraction beta = |Y-| / |Y| of a binary mask.
double compute_beta(const Mask& gt_mask);

// Class-balanced binary cross entropy over a K-frame window, averaged over K
// and over the batch; pixel terms are summed. Predictions are clamped into
// [eps_clamp, 1-eps_clamp] before the logs. gts are binary constants.
nn::Tensor balanced_bce(const std::vector<nn::Tensor>& pred_window,
                        const std::vector<nn::Tensor>& gt_window, double eps_clamp = 1e-7);

using CriticFn = std::function<nn::Tensor(const nn::Tensor&)>;

// WGAN-GP penalty E[(||grad_x critic(x~)||_2 - 1)^2] with x~ = eps*real +
// (1-eps)*fake per sample. The score map is averaged per sample before
// differentiation. The result stays on the tape, so minimizing it trains
// the critic (second derivative through the input gradient).
nn::Tensor gradient_penalty(const CriticFn& critic, const nn::Tensor& real,
                            const nn::Tensor& fake, Rng& rng);
nn::Tensor gradient_penalty_with_eps(const CriticFn& critic, const nn::Tensor& real,
                                     const nn::Tensor& fake, const std::vector<double>& eps);

struct WganTerms {
  nn::Tensor gap;  // mean critic(real) - mean critic(fake), averaged over K
  nn::Tensor gp;   // averaged gradient penalty (undefined when not requested)
};

// Per-frame spatial terms: the critic scores each masked frame separately.
WganTerms spatial_loss_terms(const Critic& critic, const std::vector<nn::Tensor>& frames,
                             const std::vector<nn::Tensor>& real_masks,
                             const std::vector<nn::Tensor>& pred_masks, Rng& rng,
                             bool with_gp = true);

// Temporal terms: the K masked frames are stacked (oldest first) and scored
// jointly; the interpolation for the penalty runs over full stacks.
WganTerms temporal_loss_terms(const Critic& critic, const std::vector<nn::Tensor>& frames,
                              const std::vector<nn::Tensor>& real_masks,
                              const std::vector<nn::Tensor>& pred_masks, Rng& rng,
                              bool with_gp = true);

// Fixes the optimizer objectives:
//   total_regressor = lambda_ce*ce + lambda_s*gap_s + lambda_t*gap_t
//     (descending raises the critic scores of the fakes; penalty terms are
//      critic-side and excluded here)
//   total_critic_* = -gap + lambda_gp*gp   (descending widens the gap under
//      the Lipschitz penalty)
LossBreakdown assemble_losses(double ce, double gap_s, double gp_s, double gap_t, double gp_t,
                              const TrainConfig& config);

}  // namespace maskprop
