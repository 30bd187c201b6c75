#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "maskprop/synth.hpp"
#include "maskprop/trainer.hpp"

namespace fs = std::filesystem;
using namespace maskprop;

namespace {

std::vector<VideoSequence> tiny_corpus(int sequences = 3, int frames = 8, int size = 16) {
  std::vector<VideoSequence> corpus;
  for (int i = 0; i < sequences; ++i) {
    SynthSpec spec = random_spec(frames, size, size, 1, 100 + i);
    corpus.push_back(generate_sequence(spec, "seq" + std::to_string(i)));
  }
  return corpus;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.image_size = 16;
  cfg.k_window = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.pretrain_epochs = 2;
  cfg.adversarial_epochs = 1;
  cfg.seed = 5;
  return cfg;
}

std::vector<std::vector<double>> params_copy(const nn::ParamStore& p) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p.tensor(i).data());
  return out;
}

}  // namespace

TEST_CASE("lr schedule: constant head then polynomial decay") {
  // defaults: base 1e-5, power 0.9
  CHECK(lr_schedule(0, 1000, 100, 1e-5, 0.9) == 1e-5);
  CHECK(lr_schedule(99, 1000, 100, 1e-5, 0.9) == 1e-5);
  CHECK(lr_schedule(1000, 1000, 100, 1e-5, 0.9) == 0.0);
  const double mid = lr_schedule(550, 1000, 100, 1e-5, 0.9);  // midpoint of the decay span
  CHECK(mid == doctest::Approx(1e-5 * std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(mid == doctest::Approx(5.359e-6).epsilon(1e-4));
  // schedule fully constant when the constant head covers the run
  CHECK(lr_schedule(7, 10, 10, 1e-5, 0.9) == 1e-5);
  CHECK_THROWS(lr_schedule(11, 10, 10, 1e-5, 0.9));
}

TEST_CASE("overwrite_gt rule") {
  Mask gt = make_mask(1, 3);
  gt.at(0, 0) = 1.0;
  gt.at(0, 1) = 1.0;
  Mask pred = make_mask(1, 3);
  pred.at(0, 0) = 0.9;   // |1-0.9| < 0.25 -> overwritten
  pred.at(0, 1) = 0.5;   // |1-0.5| >= 0.25 -> kept
  pred.at(0, 2) = 0.1;   // |0-0.1| < 0.25 -> overwritten
  Mask out = overwrite_gt(gt, pred, 0.25);
  CHECK(out.at(0, 0) == 0.9);
  CHECK(out.at(0, 1) == 1.0);
  CHECK(out.at(0, 2) == 0.1);

  Mask exact = overwrite_gt(gt, gt, 0.25);
  CHECK(exact.v == gt.v);
}

TEST_CASE("overwrite_gt never flips the classification for threshold <= 0.5") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const double gt = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double pred = rng.uniform();
    Mask g = make_mask(1, 1, gt), p = make_mask(1, 1, pred);
    const double out = overwrite_gt(g, p, 0.25).at(0, 0);
    CHECK((out >= 0.5) == (gt >= 0.5));
  }
}

TEST_CASE("noise_gt: degenerate statistics, range, reproducibility") {
  Mask mask = make_mask(2, 2);
  mask.at(0, 0) = 1.0;
  Mask zero_pred = make_mask(2, 2, 0.0);
  Rng rng(32);
  CHECK(noise_gt(mask, zero_pred, rng).v == mask.v);  // mean 0, var 0

  Mask pred = make_mask(2, 2, 0.0);
  pred.at(0, 0) = 0.8;
  pred.at(1, 1) = 0.4;
  Rng r1(33), r2(33);
  Mask a = noise_gt(mask, pred, r1);
  Mask b = noise_gt(mask, pred, r2);
  CHECK(a.v == b.v);
  for (double v : a.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("window sampler emits in-bounds windows with usable priors") {
  auto corpus = tiny_corpus();
  WindowSampler sampler(&corpus, 2, ReferencePolicy::Random);
  CHECK(sampler.all().size() == 3 * 6);  // T=8, K=2 -> starts 1..6
  for (const auto& key : sampler.all()) {
    CHECK(key.start >= 1);
    CHECK(key.start + 2 - 1 < corpus[key.sequence].frame_count());
  }
  Rng rng(34);
  TrainConfig cfg = tiny_config();
  WindowBatch w = sampler.make_window(sampler.all()[4], rng, cfg);
  CHECK(w.frames.size() == 2);
  CHECK(w.gt_masks.size() == 2);
  CHECK(is_binary(w.prior_mask));
  CHECK(foreground_count(w.reference.mask) > 0);
}

TEST_CASE("pretrain: ceil(M/b) steps per epoch, critics untouched, loss drops") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  TrainState state(cfg, default_model_specs(cfg));
  auto critic_before = params_copy(state.critic_s->params());

  std::vector<StepLog> rows;
  TrainHooks hooks;
  hooks.on_step = [&rows](const StepLog& log) { rows.push_back(log); };
  run_pretrain(state, corpus, hooks);

  const int m = 18, b = 4;
  const int steps_per_epoch = (m + b - 1) / b;  // ceil
  CHECK(static_cast<int>(rows.size()) == steps_per_epoch * cfg.pretrain_epochs);
  for (const auto& r : rows) {
    CHECK(r.kind == "regressor");
    CHECK(r.lr == cfg.lr);  // constant head covers these epochs
  }
  CHECK(params_copy(state.critic_s->params()) == critic_before);
  CHECK(rows.back().loss.ce < rows.front().loss.ce);
}

TEST_CASE("adversarial: 5 critic updates per regressor update, exact ratio") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 1;
  TrainState state(cfg, default_model_specs(cfg));
  run_pretrain(state, corpus, {});

  std::vector<StepLog> rows;
  TrainHooks hooks;
  hooks.on_step = [&rows](const StepLog& log) { rows.push_back(log); };
  run_adversarial(state, corpus, hooks);

  int critic_rows = 0, regressor_rows = 0;
  for (const auto& r : rows) {
    CHECK(r.phase == Phase::Adversarial);
    if (r.kind == "critic") ++critic_rows;
    else ++regressor_rows;
  }
  REQUIRE(regressor_rows > 0);
  CHECK(critic_rows == cfg.critic_steps_per_gen * regressor_rows);
  // order within an outer iteration: 5 critic rows then 1 regressor row
  for (std::size_t i = 0; i < rows.size(); i += 6) {
    for (int c = 0; c < 5; ++c) CHECK(rows[i + c].kind == "critic");
    CHECK(rows[i + 5].kind == "regressor");
  }
}

TEST_CASE("update discipline: critic steps move critics only; regressor steps move the regressor only") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  TrainState state(cfg, default_model_specs(cfg));
  WindowSampler sampler(&corpus, cfg.k_window, ReferencePolicy::Random);
  std::vector<WindowBatch> windows;
  for (int i = 0; i < cfg.batch_size; ++i)
    windows.push_back(sampler.make_window(sampler.all()[i], state.rng, cfg));
  CollatedBatch batch = collate(windows);

  auto reg0 = params_copy(state.regressor->params());
  auto cs0 = params_copy(state.critic_s->params());
  auto ct0 = params_copy(state.critic_t->params());

  critic_update(state, batch, cfg.lr);
  CHECK(params_copy(state.regressor->params()) == reg0);
  CHECK(params_copy(state.critic_s->params()) != cs0);
  CHECK(params_copy(state.critic_t->params()) != ct0);

  auto cs1 = params_copy(state.critic_s->params());
  auto ct1 = params_copy(state.critic_t->params());
  regressor_update(state, batch, cfg.lr, /*adversarial=*/true);
  CHECK(params_copy(state.regressor->params()) != reg0);
  CHECK(params_copy(state.critic_s->params()) == cs1);
  CHECK(params_copy(state.critic_t->params()) == ct1);
}

TEST_CASE("with lambda_s = lambda_t = 0 the adversarial regressor update equals pretraining") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.lambda_s = 0.0;
  cfg.lambda_t = 0.0;
  TrainState a(cfg, default_model_specs(cfg));
  TrainState b(cfg, default_model_specs(cfg));

  WindowSampler sampler(&corpus, cfg.k_window, ReferencePolicy::Random);
  Rng batch_rng(35);
  std::vector<WindowBatch> windows;
  for (int i = 0; i < cfg.batch_size; ++i)
    windows.push_back(sampler.make_window(sampler.all()[i], batch_rng, cfg));
  CollatedBatch batch = collate(windows);

  LossBreakdown la = regressor_update(a, batch, cfg.lr, /*adversarial=*/false);
  LossBreakdown lb = regressor_update(b, batch, cfg.lr, /*adversarial=*/true);
  CHECK(la.total_regressor == lb.total_regressor);
  CHECK(params_copy(a.regressor->params()) == params_copy(b.regressor->params()));
}

TEST_CASE("train_adversarial requires k_window >= 2") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.k_window = 1;
  cfg.pretrain_epochs = 0;
  TrainState state(cfg, default_model_specs(cfg));
  CHECK_THROWS_AS(run_adversarial(state, corpus, {}), ConfigError);
}

TEST_CASE("state save/load: resumed training reproduces the exact step stream") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 1;
  cfg.adversarial_epochs = 1;
  const fs::path ckpt = fs::temp_directory_path() / "maskprop_resume.ckpt";

  // run A: pretrain + adversarial in one process
  std::vector<std::string> rows_a;
  {
    TrainState state(cfg, default_model_specs(cfg));
    run_pretrain(state, corpus, {});
    state.save(ckpt.string());
    TrainHooks hooks;
    hooks.on_step = [&rows_a](const StepLog& log) { rows_a.push_back(log.csv_row()); };
    run_adversarial(state, corpus, hooks);
  }
  // run B: reload the pretrain checkpoint, then the same adversarial epoch
  std::vector<std::string> rows_b;
  std::vector<std::vector<double>> params_b;
  {
    TrainState state = TrainState::load(ckpt.string());
    TrainHooks hooks;
    hooks.on_step = [&rows_b](const StepLog& log) { rows_b.push_back(log.csv_row()); };
    run_adversarial(state, corpus, hooks);
    params_b = params_copy(state.regressor->params());
  }
  CHECK(rows_a == rows_b);

  // and the full run twice from scratch is identical (seeded determinism)
  std::vector<std::string> rows_c;
  {
    TrainState state(cfg, default_model_specs(cfg));
    run_pretrain(state, corpus, {});
    TrainHooks hooks;
    hooks.on_step = [&rows_c](const StepLog& log) { rows_c.push_back(log.csv_row()); };
    run_adversarial(state, corpus, hooks);
    CHECK(params_copy(state.regressor->params()) == params_b);
  }
  CHECK(rows_a == rows_c);
}

TEST_CASE("divergence raises and retains finite parameters") {
  auto corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.pretrain_epochs = 0;
  cfg.adversarial_epochs = 2;
  cfg.lr = 1e60;  // guaranteed blow-up in the critic scores
  TrainState state(cfg, default_model_specs(cfg));
  CHECK_THROWS_AS(run_adversarial(state, corpus, {}), DivergenceError);
  for (std::size_t i = 0; i < state.critic_s->params().size(); ++i)
    for (double v : state.critic_s->params().tensor(i).data()) CHECK(std::isfinite(v));
}
