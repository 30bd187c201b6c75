#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maskprop/image.hpp"

namespace maskprop {

// One clip: T frames plus a binary ground-truth mask track per object.
// All types here are immutable after construction by convention; operations
// on them are pure.
struct VideoSequence {
  std::vector<Image> frames;                       // each H x W x 3, values in [0,1]
  std::map<std::string, std::vector<Mask>> gt_tracks;  // object id -> T binary masks
  std::string name;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames[0].h; }
  int width() const { return frames.empty() ? 0 : frames[0].w; }
};

// The frame/mask pair that defines one object (a 3+1 channel input).
struct ReferenceSegmentation {
  Image frame;  // H x W x 3
  Mask mask;    // H x W, binary, >= 1 foreground pixel
  int frame_index = 0;
  std::string object_id;
};

// Soft masks in [0,1] for one object over the processed frames.
struct MaskTrack {
  std::vector<Mask> soft_masks;
  std::string object_id;
};

// A K-frame training window cut from one sequence/object track.
struct WindowBatch {
  std::vector<Image> frames;      // K frames
  std::vector<Mask> gt_masks;     // K binary masks
  std::vector<Mask> pred_masks;   // K soft masks (filled by rollout)
  Mask prior_mask;                // rollout seed: mask of the frame before the window
  ReferenceSegmentation reference;
};

// Every hyperparameter of the training objective and schedule. Defaults are
// the reference training recipe; image_size/epochs default to the desk-scale setup.
struct TrainConfig {
  double lambda_ce = 100.0;
  double lambda_s = 1.0;
  double lambda_t = 1.0;
  double lambda_gp = 10.0;
  int k_window = 4;
  int critic_steps_per_gen = 5;
  double lr = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 6;
  double poly_decay_power = 0.9;
  int lr_constant_epochs = 10;
  double overwrite_threshold = 0.25;
  int image_size = 64;
  int pretrain_epochs = 6;
  int adversarial_epochs = 40;
  std::uint64_t seed = 0;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
};

// Returns one entry per violated VideoSequence invariant; empty means valid.
std::vector<std::string> validate_sequence(const VideoSequence& seq);

// Extracts the reference frame/mask pair for one object.
// Throws IndexError / EmptyMaskError.
ReferenceSegmentation make_reference(const VideoSequence& seq, const std::string& object_id,
                                     int frame_index);

// First frame index in which the object has a foreground pixel; -1 if never.
int first_appearance(const VideoSequence& seq, const std::string& object_id);

// Flat `key = value` config file with '#' comments; unknown keys are an
// error naming the key.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string serialize_config(const TrainConfig& cfg);
void save_config(const TrainConfig& cfg, const std::string& path);

}  // namespace maskprop
