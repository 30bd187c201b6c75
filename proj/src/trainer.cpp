#include "maskprop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "maskprop/augment.hpp"
#include "maskprop/error.hpp"
#include "maskprop/nn/bridge.hpp"

namespace maskprop {

using nn::Tensor;

double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t constant_steps,
                   double base_lr, double power) {
  if (step < 0 || step > total_steps) throw Error("lr_schedule: step out of range");
  if (constant_steps >= total_steps || step < constant_steps) return base_lr;
  const double s = static_cast<double>(step - constant_steps);
  const double cap = static_cast<double>(total_steps - constant_steps);
  return base_lr * std::pow(1.0 - s / cap, power);
}

Mask overwrite_gt(const Mask& gt, const Mask& pred, double threshold) {
  if (!gt.same_size(pred)) throw ShapeError("overwrite_gt: size mismatch");
  Mask out = gt;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    if (std::abs(pred.v[i] - gt.v[i]) < threshold) out.v[i] = pred.v[i];
  return out;
}

Mask noise_gt(const Mask& mask, const Mask& pred, Rng& rng) {
  if (!mask.same_size(pred)) throw ShapeError("noise_gt: size mismatch");
  double mean = 0.0;
  for (double v : pred.v) mean += v;
  mean /= static_cast<double>(pred.v.size());
  double var = 0.0;
  for (double v : pred.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(pred.v.size());
  const double stddev = std::sqrt(var);
  Mask out = mask;
  for (auto& v : out.v) v = std::clamp(v + rng.normal(mean, stddev), 0.0, 1.0);
  return out;
}

ModelSpecs default_model_specs(const TrainConfig& config) {
  ModelSpecs specs;
  const int size = config.image_size;
  int stages = 0;
  while (stages < 4 && size % (1 << (stages + 1)) == 0 && (size >> (stages + 1)) >= 2) ++stages;
  if (stages < 2)
    throw ConfigError("image_size " + std::to_string(size) +
                      " too small or not divisible by 2^num_stages");
  const std::vector<int> widths{12, 16, 24, 32};
  specs.regressor.encoder_channels.assign(widths.end() - stages, widths.end());
  specs.regressor.num_stages = stages;
  specs.regressor.base_image_size = size;
  specs.regressor.validate();

  int down = 0;
  while (down < 6 && size % (1 << (down + 1)) == 0) ++down;
  specs.critic_s.num_down = down;
  specs.critic_s.input_channels = 3;
  specs.critic_t.num_down = down;
  specs.critic_t.input_channels = 3 * config.k_window;
  return specs;
}

WindowSampler::WindowSampler(const std::vector<VideoSequence>* dataset, int k_window,
                             ReferencePolicy policy)
    : dataset_(dataset), k_window_(k_window), policy_(policy) {
  for (std::size_t s = 0; s < dataset_->size(); ++s) {
    const VideoSequence& seq = (*dataset_)[s];
    const int t = seq.frame_count();
    for (const auto& [id, track] : seq.gt_tracks) {
      if (first_appearance(seq, id) < 0) continue;  // never visible: no reference possible
      for (int start = 1; start + k_window_ - 1 < t; ++start)
        keys_.push_back({static_cast<int>(s), id, start});
    }
  }
}

WindowBatch WindowSampler::make_window(const WindowKey& key, Rng& rng,
                                       const TrainConfig& config) const {
  const VideoSequence& seq = (*dataset_)[key.sequence];
  const auto& track = seq.gt_tracks.at(key.object);

  int ref_index;
  if (policy_ == ReferencePolicy::FirstAppearance) {
    ref_index = first_appearance(seq, key.object);
  } else {
    std::vector<int> candidates;
    for (int t = 0; t < seq.frame_count(); ++t)
      if (foreground_count(track[t]) > 0) candidates.push_back(t);
    ref_index = candidates[rng.below(candidates.size())];
  }

  const AugmentParams params = sample_augment(rng);
  const int size = config.image_size;

  WindowBatch window;
  for (int i = 0; i < config.k_window; ++i) {
    const int t = key.start + i;
    auto [frame, mask] = apply_augment(seq.frames[t], track[t], params, size, size);
    window.frames.push_back(std::move(frame));
    window.gt_masks.push_back(std::move(mask));
  }
  window.prior_mask =
      apply_augment(seq.frames[key.start - 1], track[key.start - 1], params, size, size).second;

  auto [ref_frame, ref_mask] = apply_augment(seq.frames[ref_index], track[ref_index], params,
                                             size, size);
  if (foreground_count(ref_mask) == 0) {
    // augmentation cropped the object away; fall back to the plain resize
    AugmentParams identity;
    std::tie(ref_frame, ref_mask) =
        apply_augment(seq.frames[ref_index], track[ref_index], identity, size, size);
  }
  window.reference.frame = std::move(ref_frame);
  window.reference.mask = std::move(ref_mask);
  window.reference.frame_index = ref_index;
  window.reference.object_id = key.object;
  return window;
}

TrainState::TrainState(const TrainConfig& config_, const ModelSpecs& specs_)
    : config(config_),
      specs(specs_),
      opt_regressor(config_.adam_beta1, config_.adam_beta2),
      opt_critic_s(config_.adam_beta1, config_.adam_beta2),
      opt_critic_t(config_.adam_beta1, config_.adam_beta2),
      rng(config_.seed) {
  config.validate();
  Rng init_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  regressor = std::make_unique<Regressor>(specs.regressor, init_rng);
  critic_s = std::make_unique<Critic>(specs.critic_s, init_rng);
  critic_t = std::make_unique<Critic>(specs.critic_t, init_rng);
}

namespace {

nlohmann::json spec_to_json(const RegressorSpec& s) {
  return {{"encoder_channels", s.encoder_channels},
          {"num_stages", s.num_stages},
          {"global_conv_kernel", s.global_conv_kernel},
          {"skip_reduction", s.skip_reduction},
          {"base_image_size", s.base_image_size},
          {"last_decoder_channels", s.last_decoder_channels}};
}

RegressorSpec spec_from_json(const nlohmann::json& j) {
  RegressorSpec s;
  s.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  s.num_stages = j.at("num_stages").get<int>();
  s.global_conv_kernel = j.at("global_conv_kernel").get<int>();
  s.skip_reduction = j.at("skip_reduction").get<int>();
  s.base_image_size = j.at("base_image_size").get<int>();
  s.last_decoder_channels = j.at("last_decoder_channels").get<int>();
  return s;
}

nlohmann::json critic_to_json(const CriticSpec& s) {
  return {{"num_down", s.num_down},
          {"base_channels", s.base_channels},
          {"input_channels", s.input_channels}};
}

CriticSpec critic_from_json(const nlohmann::json& j) {
  CriticSpec s;
  s.num_down = j.at("num_down").get<int>();
  s.base_channels = j.at("base_channels").get<int>();
  s.input_channels = j.at("input_channels").get<int>();
  return s;
}

}  // namespace

Checkpoint TrainState::to_checkpoint() const {
  Checkpoint ck;
  ck.meta["format"] = "trainstate";
  ck.meta["phase"] = phase == Phase::Pretrain ? "pretrain" : "adversarial";
  ck.meta["epoch"] = epoch;
  ck.meta["global_step"] = global_step;
  ck.meta["config"] = serialize_config(config);
  ck.meta["regressor_spec"] = spec_to_json(specs.regressor);
  ck.meta["critic_s_spec"] = critic_to_json(specs.critic_s);
  ck.meta["critic_t_spec"] = critic_to_json(specs.critic_t);
  auto st = rng.state();
  ck.meta["rng"] = {std::to_string(st[0]), std::to_string(st[1]), std::to_string(st[2]),
                    std::to_string(st[3])};
  ck.put_params("regressor", regressor->params());
  ck.put_params("critic_s", critic_s->params());
  ck.put_params("critic_t", critic_t->params());
  auto put_opt = [&ck](const std::string& name, const nn::Adam& opt,
                       const nn::ParamStore& params) {
    auto blob = opt.serialize(params);
    const int n = static_cast<int>(blob.size());
    ck.put("opt/" + name, {n}, std::move(blob));
  };
  put_opt("regressor", opt_regressor, regressor->params());
  put_opt("critic_s", opt_critic_s, critic_s->params());
  put_opt("critic_t", opt_critic_t, critic_t->params());
  return ck;
}

void TrainState::save(const std::string& path) const { to_checkpoint().save(path); }

Checkpoint TrainState::export_inference() const {
  Checkpoint ck;
  ck.meta["format"] = "inference";
  ck.meta["regressor_spec"] = spec_to_json(specs.regressor);
  ck.meta["global_step"] = global_step;
  ck.put_params("regressor", regressor->params());
  return ck;
}

TrainState TrainState::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  TrainConfig config = parse_config(ck.meta.at("config").get<std::string>());
  ModelSpecs specs;
  specs.regressor = spec_from_json(ck.meta.at("regressor_spec"));
  specs.critic_s = critic_from_json(ck.meta.at("critic_s_spec"));
  specs.critic_t = critic_from_json(ck.meta.at("critic_t_spec"));
  TrainState state(config, specs);
  state.phase =
      ck.meta.at("phase").get<std::string>() == "adversarial" ? Phase::Adversarial
                                                              : Phase::Pretrain;
  state.epoch = ck.meta.at("epoch").get<int>();
  state.global_step = ck.meta.at("global_step").get<std::int64_t>();
  std::array<std::uint64_t, 4> st{};
  for (int i = 0; i < 4; ++i) st[i] = std::stoull(ck.meta.at("rng")[i].get<std::string>());
  state.rng.set_state(st);
  ck.load_params("regressor", state.regressor->params());
  ck.load_params("critic_s", state.critic_s->params());
  ck.load_params("critic_t", state.critic_t->params());
  state.opt_regressor.deserialize(state.regressor->params(), ck.get("opt/regressor").data);
  state.opt_critic_s.deserialize(state.critic_s->params(), ck.get("opt/critic_s").data);
  state.opt_critic_t.deserialize(state.critic_t->params(), ck.get("opt/critic_t").data);
  return state;
}

std::string StepLog::csv_header() {
  return "step,phase,kind,sched_step,lr," + LossBreakdown::csv_header();
}

std::string StepLog::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << step << ',' << (phase == Phase::Pretrain ? "pretrain" : "adversarial") << ',' << kind
     << ',' << sched_step << ',' << lr << ',' << loss.csv_row();
  return os.str();
}

CollatedBatch collate(const std::vector<WindowBatch>& windows) {
  if (windows.empty()) throw ShapeError("collate: empty batch");
  const int k = static_cast<int>(windows[0].frames.size());
  CollatedBatch batch;
  batch.windows = windows;
  for (int t = 0; t < k; ++t) {
    std::vector<const Image*> frames, gts;
    for (const auto& w : windows) {
      frames.push_back(&w.frames[t]);
      gts.push_back(&w.gt_masks[t]);
    }
    batch.frames.push_back(nn::tensor_from_images(frames));
    batch.gts.push_back(nn::tensor_from_images(gts));
  }
  std::vector<const Image*> priors;
  for (const auto& w : windows) priors.push_back(&w.prior_mask);
  batch.prior = nn::tensor_from_images(priors);
  std::vector<Image> ref_cat;
  for (const auto& w : windows) {
    Image cat(w.reference.frame.h, w.reference.frame.w, 4);
    std::copy(w.reference.frame.v.begin(), w.reference.frame.v.end(), cat.v.begin());
    std::copy(w.reference.mask.v.begin(), w.reference.mask.v.end(),
              cat.v.begin() + w.reference.frame.v.size());
    ref_cat.push_back(std::move(cat));
  }
  std::vector<const Image*> refs;
  for (const auto& r : ref_cat) refs.push_back(&r);
  batch.reference = nn::tensor_from_images(refs);
  return batch;
}

namespace {

// Real-sample masks for the critics: gt overwritten by confident-correct
// predictions, then noised with the prediction statistics.
std::vector<Tensor> treated_real_masks(const CollatedBatch& batch,
                                       const std::vector<Tensor>& preds,
                                       const TrainConfig& config, Rng& rng) {
  const int k = static_cast<int>(batch.frames.size());
  std::vector<Tensor> out;
  for (int t = 0; t < k; ++t) {
    std::vector<Image> masks;
    for (std::size_t n = 0; n < batch.windows.size(); ++n) {
      Mask pred = nn::image_from_tensor(preds[t], static_cast<int>(n));
      Mask treated =
          overwrite_gt(batch.windows[n].gt_masks[t], pred, config.overwrite_threshold);
      masks.push_back(noise_gt(treated, pred, rng));
    }
    std::vector<const Image*> ptrs;
    for (const auto& m : masks) ptrs.push_back(&m);
    out.push_back(nn::tensor_from_images(ptrs));
  }
  return out;
}

std::vector<Tensor> detach_all(const std::vector<Tensor>& xs) {
  std::vector<Tensor> out;
  for (const auto& x : xs) out.push_back(x.detach());
  return out;
}

struct Snapshot {
  std::vector<std::vector<double>> regressor, critic_s, critic_t;
  std::vector<double> opt_r, opt_s, opt_t;
};

Snapshot snapshot_of(const TrainState& state) {
  Snapshot s;
  auto grab = [](const nn::ParamStore& p, std::vector<std::vector<double>>& out) {
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p.tensor(i).data());
  };
  grab(state.regressor->params(), s.regressor);
  grab(state.critic_s->params(), s.critic_s);
  grab(state.critic_t->params(), s.critic_t);
  s.opt_r = state.opt_regressor.serialize(state.regressor->params());
  s.opt_s = state.opt_critic_s.serialize(state.critic_s->params());
  s.opt_t = state.opt_critic_t.serialize(state.critic_t->params());
  return s;
}

void restore_snapshot(TrainState& state, const Snapshot& s) {
  auto put = [](nn::ParamStore& p, const std::vector<std::vector<double>>& src) {
    for (std::size_t i = 0; i < p.size(); ++i) p.tensor(i).data() = src[i];
  };
  put(state.regressor->params(), s.regressor);
  put(state.critic_s->params(), s.critic_s);
  put(state.critic_t->params(), s.critic_t);
  state.opt_regressor.deserialize(state.regressor->params(), s.opt_r);
  state.opt_critic_s.deserialize(state.critic_s->params(), s.opt_s);
  state.opt_critic_t.deserialize(state.critic_t->params(), s.opt_t);
}

}  // namespace

LossBreakdown regressor_update(TrainState& state, const CollatedBatch& batch, double lr,
                               bool adversarial) {
  const TrainConfig& cfg = state.config;
  auto rollout = state.regressor->rollout(batch.frames, batch.reference, batch.prior,
                                          SkipState::none());
  Tensor ce = balanced_bce(rollout.preds, batch.gts);
  Tensor total = nn::scale(ce, cfg.lambda_ce);
  LossBreakdown b;
  b.ce = ce.value();
  const bool use_critics = adversarial && (cfg.lambda_s > 0 || cfg.lambda_t > 0);
  if (use_critics) {
    auto reals = treated_real_masks(batch, detach_all(rollout.preds), cfg, state.rng);
    WganTerms sp = spatial_loss_terms(*state.critic_s, batch.frames, reals, rollout.preds,
                                      state.rng, /*with_gp=*/false);
    WganTerms tm = temporal_loss_terms(*state.critic_t, batch.frames, reals, rollout.preds,
                                       state.rng, /*with_gp=*/false);
    total = nn::add(total, nn::add(nn::scale(sp.gap, cfg.lambda_s),
                                   nn::scale(tm.gap, cfg.lambda_t)));
    b.spatial = sp.gap.value();
    b.temporal = tm.gap.value();
  }
  b.total_regressor = cfg.lambda_ce * b.ce + cfg.lambda_s * b.spatial + cfg.lambda_t * b.temporal;
  nn::GradMap grads = nn::backward(total);
  state.opt_regressor.step(state.regressor->params(), grads, lr);
  return b;
}

LossBreakdown critic_update(TrainState& state, const CollatedBatch& batch, double lr) {
  const TrainConfig& cfg = state.config;
  auto rollout = state.regressor->rollout(batch.frames, batch.reference, batch.prior,
                                          SkipState::none());
  auto preds = detach_all(rollout.preds);
  auto reals = treated_real_masks(batch, preds, cfg, state.rng);

  WganTerms sp = spatial_loss_terms(*state.critic_s, batch.frames, reals, preds, state.rng);
  Tensor total_s = nn::add(nn::neg(sp.gap), nn::scale(sp.gp, cfg.lambda_gp));
  nn::GradMap grads_s = nn::backward(total_s);
  state.opt_critic_s.step(state.critic_s->params(), grads_s, lr);

  WganTerms tm = temporal_loss_terms(*state.critic_t, batch.frames, reals, preds, state.rng);
  Tensor total_t = nn::add(nn::neg(tm.gap), nn::scale(tm.gp, cfg.lambda_gp));
  nn::GradMap grads_t = nn::backward(total_t);
  state.opt_critic_t.step(state.critic_t->params(), grads_t, lr);

  LossBreakdown b = assemble_losses(0.0, sp.gap.value(), sp.gp.value(), tm.gap.value(),
                                    tm.gp.value(), cfg);
  b.total_regressor = 0.0;  // not evaluated on critic steps
  return b;
}

namespace {

void check_finite_or_throw(TrainState& state, const LossBreakdown& b, const Snapshot& snap) {
  if (b.finite()) return;
  restore_snapshot(state, snap);
  throw DivergenceError("non-finite loss at global step " + std::to_string(state.global_step));
}

}  // namespace

void run_pretrain(TrainState& state, const std::vector<VideoSequence>& dataset,
                  const TrainHooks& hooks) {
  if (dataset.empty()) throw Error("pretrain: empty dataset");
  if (state.phase != Phase::Pretrain) throw Error("pretrain: state is past the pretrain phase");
  const TrainConfig& cfg = state.config;
  WindowSampler sampler(&dataset, cfg.k_window, ReferencePolicy::Random);
  const std::int64_t m = static_cast<std::int64_t>(sampler.all().size());
  if (m == 0) throw Error("pretrain: dataset yields no training windows");
  const std::int64_t steps_per_epoch = (m + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * cfg.pretrain_epochs;
  const std::int64_t constant_steps = steps_per_epoch * cfg.lr_constant_epochs;

  for (int epoch = state.epoch; epoch < cfg.pretrain_epochs; ++epoch) {
    auto deck = sampler.all();
    state.rng.shuffle(deck);
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<WindowBatch> windows;
      for (std::int64_t i = s * cfg.batch_size;
           i < std::min<std::int64_t>(m, (s + 1) * cfg.batch_size); ++i)
        windows.push_back(sampler.make_window(deck[i], state.rng, cfg));
      const std::int64_t sched_step = epoch * steps_per_epoch + s;
      const double lr = lr_schedule(sched_step, total_steps, constant_steps, cfg.lr,
                                    cfg.poly_decay_power);
      Snapshot snap = snapshot_of(state);
      LossBreakdown loss = regressor_update(state, collate(windows), lr, /*adversarial=*/false);
      check_finite_or_throw(state, loss, snap);
      StepLog log{state.global_step++, Phase::Pretrain, "regressor", sched_step, lr, loss};
      if (hooks.on_step) hooks.on_step(log);
    }
    state.epoch = epoch + 1;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, epoch);
  }
}

void run_adversarial(TrainState& state, const std::vector<VideoSequence>& dataset,
                     const TrainHooks& hooks) {
  if (dataset.empty()) throw Error("train_adversarial: empty dataset");
  const TrainConfig& cfg = state.config;
  if (cfg.k_window < 2)
    throw ConfigError("train_adversarial: k_window must be >= 2 for the temporal critic");
  if (state.phase == Phase::Pretrain) {
    if (state.epoch < cfg.pretrain_epochs)
      throw Error("train_adversarial: pretrain phase is not complete");
    state.phase = Phase::Adversarial;
    state.epoch = 0;
  }
  WindowSampler sampler(&dataset, cfg.k_window, ReferencePolicy::Random);
  const std::int64_t m = static_cast<std::int64_t>(sampler.all().size());
  if (m == 0) throw Error("train_adversarial: dataset yields no training windows");
  const std::int64_t draws_per_outer = cfg.critic_steps_per_gen + 1;
  const std::int64_t outers_per_epoch =
      std::max<std::int64_t>(1, m / (cfg.batch_size * draws_per_outer));
  const std::int64_t total_outers = outers_per_epoch * cfg.adversarial_epochs;
  const std::int64_t constant_outers = outers_per_epoch * cfg.lr_constant_epochs;

  for (int epoch = state.epoch; epoch < cfg.adversarial_epochs; ++epoch) {
    auto deck = sampler.all();
    state.rng.shuffle(deck);
    std::size_t cursor = 0;
    auto next_batch = [&]() {
      std::vector<WindowBatch> windows;
      for (int i = 0; i < cfg.batch_size; ++i) {
        if (cursor >= deck.size()) {
          state.rng.shuffle(deck);
          cursor = 0;
        }
        windows.push_back(sampler.make_window(deck[cursor++], state.rng, cfg));
      }
      return collate(windows);
    };
    for (std::int64_t outer = 0; outer < outers_per_epoch; ++outer) {
      const std::int64_t sched_step = epoch * outers_per_epoch + outer;
      const double lr = lr_schedule(sched_step, total_outers, constant_outers, cfg.lr,
                                    cfg.poly_decay_power);
      for (int c = 0; c < cfg.critic_steps_per_gen; ++c) {
        Snapshot snap = snapshot_of(state);
        LossBreakdown loss = critic_update(state, next_batch(), lr);
        check_finite_or_throw(state, loss, snap);
        StepLog log{state.global_step++, Phase::Adversarial, "critic", sched_step, lr, loss};
        if (hooks.on_step) hooks.on_step(log);
      }
      Snapshot snap = snapshot_of(state);
      LossBreakdown loss = regressor_update(state, next_batch(), lr, /*adversarial=*/true);
      check_finite_or_throw(state, loss, snap);
      StepLog log{state.global_step++, Phase::Adversarial, "regressor", sched_step, lr, loss};
      if (hooks.on_step) hooks.on_step(log);
    }
    state.epoch = epoch + 1;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state, epoch);
  }
}

TrainState pretrain(const std::vector<VideoSequence>& dataset, const TrainConfig& config,
                    const TrainHooks& hooks) {
  TrainState state(config, default_model_specs(config));
  run_pretrain(state, dataset, hooks);
  return state;
}

void train_adversarial(TrainState& state, const std::vector<VideoSequence>& dataset,
                       const TrainConfig& config, const TrainHooks& hooks) {
  state.config = config;
  state.config.validate();
  run_adversarial(state, dataset, hooks);
}

}  // namespace maskprop
