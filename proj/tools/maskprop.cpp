// Command-line driver: corpus synthesis, two-phase training, propagation,
// and DAVIS-style evaluation.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "maskprop/core.hpp"
#include "maskprop/davis_io.hpp"
#include "maskprop/error.hpp"
#include "maskprop/inference.hpp"
#include "maskprop/metrics.hpp"
#include "maskprop/png_io.hpp"
#include "maskprop/synth.hpp"
#include "maskprop/trainer.hpp"

namespace fs = std::filesystem;
using namespace maskprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct SynthArgs {
  std::string out;
  int sequences = 20;
  int frames = 24;
  int size = 64;
  int objects = 1;
  std::uint64_t seed = 0;
  std::string prefix = "seq";
};

int cmd_synth(const SynthArgs& args) {
  if (args.size % 16 != 0) {
    std::cerr << "error: --size " << args.size << " is not divisible by 2^num_stages (16)\n";
    return kExitUsage;
  }
  if (args.sequences < 1 || args.frames < 2 || args.objects < 1) {
    std::cerr << "error: need --sequences >= 1, --frames >= 2, --objects >= 1\n";
    return kExitUsage;
  }
  for (int i = 0; i < args.sequences; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03d", args.prefix.c_str(), i);
    SynthSpec spec = random_spec(args.frames, args.size, args.size, args.objects,
                                 args.seed * 1000003ULL + static_cast<std::uint64_t>(i));
    VideoSequence seq = generate_sequence(spec, name);
    write_davis_layout(seq, args.out);
    std::cout << "name=" << name << " frames=" << seq.frame_count() << " size=" << seq.height()
              << "x" << seq.width() << " objects=" << seq.gt_tracks.size() << "\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config_path;
  std::string out;
  std::string phase = "both";
  std::string resume;
  int ckpt_every = 0;  // extra step-stamped snapshots; 0 disables
};

std::vector<VideoSequence> load_corpus(const std::string& dir) {
  std::vector<VideoSequence> corpus;
  for (const auto& name : list_sequences(dir)) corpus.push_back(read_davis_layout(dir, name));
  if (corpus.empty()) throw IoError("no sequences found under " + dir);
  return corpus;
}

int cmd_train(const TrainArgs& args) {
  TrainConfig config = load_config(args.config_path);
  auto corpus = load_corpus(args.data);
  fs::create_directories(args.out);
  save_config(config, (fs::path(args.out) / "config_snapshot.cfg").string());

  std::ofstream log((fs::path(args.out) / "loss_log.csv").string());
  if (!log) throw IoError("cannot write loss log under " + args.out);
  log << StepLog::csv_header() << "\n";
  TrainHooks hooks;
  hooks.on_step = [&log](const StepLog& entry) { log << entry.csv_row() << "\n"; };
  hooks.on_epoch_end = [&args](const TrainState& state, int) {
    state.save((fs::path(args.out) / "last.ckpt").string());
  };

  std::unique_ptr<TrainState> state;
  if (!args.resume.empty())
    state = std::make_unique<TrainState>(TrainState::load(args.resume));
  else
    state = std::make_unique<TrainState>(config, default_model_specs(config));
  if (!args.resume.empty()) {
    state->config = config;
    state->config.validate();
  }

  LossBreakdown last;
  TrainHooks wrapped = hooks;
  wrapped.on_step = [&](const StepLog& entry) {
    last = entry.loss;
    hooks.on_step(entry);
    if (args.ckpt_every > 0 && entry.step > 0 && entry.step % args.ckpt_every == 0)
      state->export_inference().save(
          (fs::path(args.out) / ("step_" + std::to_string(entry.step) + ".ckpt")).string());
  };

  try {
    if (args.phase == "pretrain" || args.phase == "both") {
      run_pretrain(*state, corpus, wrapped);
      state->save((fs::path(args.out) / "pretrain.ckpt").string());
    }
    if (args.phase == "adversarial" || args.phase == "both") {
      run_adversarial(*state, corpus, wrapped);
      state->save((fs::path(args.out) / "final.ckpt").string());
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (last finite checkpoint retained)\n";
    state->save((fs::path(args.out) / "last.ckpt").string());
    return kExitRuntime;
  }
  state->save((fs::path(args.out) / "last.ckpt").string());
  state->export_inference().save((fs::path(args.out) / "model.ckpt").string());
  std::cout << "final " << LossBreakdown::csv_header() << "\n" << last.csv_row() << "\n";
  return kExitOk;
}

struct InferArgs {
  std::string ckpt;
  std::string data;
  std::string seq;
  std::string out;
  std::string ref_frame = "first";
  bool soft = false;
};

int cmd_infer(const InferArgs& args) {
  Checkpoint ckpt = Checkpoint::load(args.ckpt);
  VideoSequence video = read_davis_layout(args.data, args.seq);

  std::vector<ReferenceSegmentation> refs;
  for (const auto& [id, track] : video.gt_tracks) {
    int index;
    if (args.ref_frame == "first") {
      index = first_appearance(video, id);
      if (index < 0) continue;
    } else {
      index = std::stoi(args.ref_frame);
    }
    refs.push_back(make_reference(video, id, index));
  }
  if (refs.empty()) throw Error("no usable references in sequence " + args.seq);

  SegmentationResult result = segment_sequence(ckpt, video, refs);

  const fs::path ann_dir = fs::path(args.out) / "Annotations" / args.seq;
  fs::create_directories(ann_dir);
  for (int t = 0; t < video.frame_count(); ++t) {
    char name[16];
    std::snprintf(name, sizeof name, "%05d.png", t);
    write_png_indexed((ann_dir / name).string(), result.labels[t]);
  }
  if (args.soft) {
    for (const auto& track : result.tracks) {
      const fs::path dir = fs::path(args.out) / "SoftMasks" / args.seq / track.object_id;
      fs::create_directories(dir);
      for (std::size_t t = 0; t < track.soft_masks.size(); ++t) {
        char name[16];
        std::snprintf(name, sizeof name, "%05zu.png", t);
        write_png_gray((dir / name).string(), track.soft_masks[t]);
      }
    }
  }
  nlohmann::json timing{{"sequence", args.seq},
                        {"fps", result.fps},
                        {"per_frame_ms", result.per_frame_ms}};
  std::ofstream tf((fs::path(args.out) / ("timing_" + args.seq + ".json")).string());
  tf << timing.dump(2) << "\n";
  std::cout << "fps " << result.fps << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
  bool include_first = false;
};

int cmd_eval(const EvalArgs& args) {
  EvalReport report = evaluate(args.pred, args.gt, args.include_first);
  std::ofstream f(args.out);
  if (!f) throw IoError("cannot write report: " + args.out);
  f << report.to_csv();
  std::cout << "J&F " << report.jf_mean << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video object mask propagation: synthesis, training, inference, evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic moving-shapes corpus");
  s->add_option("--out", synth.out, "Output corpus directory")->required();
  s->add_option("--sequences", synth.sequences, "Number of sequences (default 20)");
  s->add_option("--frames", synth.frames, "Frames per sequence (default 24)");
  s->add_option("--size", synth.size, "Square frame size in px (default 64)");
  s->add_option("--objects", synth.objects, "Objects per sequence (default 1)");
  s->add_option("--seed", synth.seed, "Corpus seed (default 0)");
  s->add_option("--prefix", synth.prefix, "Sequence name prefix (default seq)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the mask propagation model");
  t->add_option("--data", train.data, "Corpus directory (DAVIS layout)")->required();
  t->add_option("--config", train.config_path, "Training config file")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--phase", train.phase, "pretrain | adversarial | both (default both)")
      ->check(CLI::IsMember({"pretrain", "adversarial", "both"}));
  t->add_option("--resume", train.resume, "Resume from a saved training state");
  t->add_option("--ckpt-every", train.ckpt_every,
                "Also write an inference snapshot every N steps (0 = off)");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Propagate masks through one sequence");
  i->add_option("--ckpt", infer.ckpt, "Checkpoint file")->required();
  i->add_option("--data", infer.data, "Corpus directory")->required();
  i->add_option("--seq", infer.seq, "Sequence name")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_option("--ref-frame", infer.ref_frame, "first | frame index (default first)");
  i->add_flag("--soft", infer.soft, "Also write per-object soft masks");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", eval.pred, "Prediction directory (DAVIS layout)")->required();
  e->add_option("--gt", eval.gt, "Ground-truth directory (DAVIS layout)")->required();
  e->add_option("--out", eval.out, "Report CSV path")->required();
  e->add_flag("--include-first", eval.include_first, "Score the reference frame too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);  // 0
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (i->parsed()) return cmd_infer(infer);
    if (e->parsed()) return cmd_eval(eval);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
