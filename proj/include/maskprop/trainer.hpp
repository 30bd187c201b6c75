#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maskprop/checkpoint.hpp"
#include "maskprop/core.hpp"
#include "maskprop/critics.hpp"
#include "maskprop/losses.hpp"
#include "maskprop/regressor.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

// Polynomial decay: base_lr while step < constant_steps, then
// base_lr * (1 - s/S)^power over the remaining steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t constant_steps,
                   double base_lr, double power);

// Real-sample adjustment for the critics: where the prediction is correct
// with |pred - gt| < threshold, the real mask takes the predicted value.
// Never applied to the cross-entropy targets.
Mask overwrite_gt(const Mask& gt, const Mask& pred, double threshold = 0.25);

// Adds i.i.d. Gaussian noise with the prediction's mean/variance, clamped
// back into [0,1].
Mask noise_gt(const Mask& mask, const Mask& pred, Rng& rng);

enum class Phase { Pretrain, Adversarial };
enum class ReferencePolicy { FirstAppearance, Random };

struct ModelSpecs {
  RegressorSpec regressor;
  CriticSpec critic_s;
  CriticSpec critic_t;
};

// Derives desk-scale network shapes from the configured image size.
ModelSpecs default_model_specs(const TrainConfig& config);

struct WindowKey {
  int sequence = 0;
  std::string object;
  int start = 0;  // first window frame; start-1 provides the prior mask
};

// Enumerates K-frame windows fully inside one sequence/object track and
// materializes them with one augmentation draw per window.
class WindowSampler {
 public:
  WindowSampler(const std::vector<VideoSequence>* dataset, int k_window, ReferencePolicy policy);
  const std::vector<WindowKey>& all() const { return keys_; }
  WindowBatch make_window(const WindowKey& key, Rng& rng, const TrainConfig& config) const;

 private:
  const std::vector<VideoSequence>* dataset_;
  int k_window_;
  ReferencePolicy policy_;
  std::vector<WindowKey> keys_;
};

struct TrainState {
  TrainConfig config;
  ModelSpecs specs;
  std::unique_ptr<Regressor> regressor;
  std::unique_ptr<Critic> critic_s;
  std::unique_ptr<Critic> critic_t;
  nn::Adam opt_regressor, opt_critic_s, opt_critic_t;
  Phase phase = Phase::Pretrain;
  int epoch = 0;  // within the current phase
  std::int64_t global_step = 0;
  Rng rng;

  TrainState(const TrainConfig& config, const ModelSpecs& specs);
  void save(const std::string& path) const;
  static TrainState load(const std::string& path);
  // Full state container (parameters, optimizer moments, rng, counters).
  Checkpoint to_checkpoint() const;
  // Regressor-only container: critics and optimizer state are omitted.
  Checkpoint export_inference() const;
};

struct StepLog {
  std::int64_t step = 0;          // global row index
  Phase phase = Phase::Pretrain;
  std::string kind;               // "critic" | "regressor"
  std::int64_t sched_step = 0;    // schedule step the lr was computed from
  double lr = 0.0;
  LossBreakdown loss;

  static std::string csv_header();
  std::string csv_row() const;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const TrainState&, int epoch)> on_epoch_end;
};

// Collated K-window batch as tape tensors.
struct CollatedBatch {
  std::vector<nn::Tensor> frames;  // K x [N,3,H,W]
  std::vector<nn::Tensor> gts;     // K x [N,1,H,W], binary
  nn::Tensor prior;                // [N,1,H,W]
  nn::Tensor reference;            // [N,4,H,W]
  std::vector<WindowBatch> windows;
};
CollatedBatch collate(const std::vector<WindowBatch>& windows);

// Single optimizer steps, exposed for the update-discipline tests.
LossBreakdown regressor_update(TrainState& state, const CollatedBatch& batch, double lr,
                               bool adversarial);
LossBreakdown critic_update(TrainState& state, const CollatedBatch& batch, double lr);

// Phase drivers. Both resume from state.epoch and leave the state at an
// epoch boundary; rng/optimizer state round-trips through save/load, so a
// resumed run reproduces the original step stream bit for bit.
void run_pretrain(TrainState& state, const std::vector<VideoSequence>& dataset,
                  const TrainHooks& hooks = {});
void run_adversarial(TrainState& state, const std::vector<VideoSequence>& dataset,
                     const TrainHooks& hooks = {});

// Convenience wrappers.
TrainState pretrain(const std::vector<VideoSequence>& dataset, const TrainConfig& config,
                    const TrainHooks& hooks = {});
void train_adversarial(TrainState& state, const std::vector<VideoSequence>& dataset,
                       const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace maskprop
