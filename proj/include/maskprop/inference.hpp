#pragma once

#include <memory>
#include <vector>

#include "maskprop/checkpoint.hpp"
#include "maskprop/core.hpp"
#include "maskprop/png_io.hpp"
#include "maskprop/regressor.hpp"

namespace maskprop {

// Test-time propagation state. Only the regressor is loaded; the session
// asserts that no critic parameter was read from the checkpoint.
class InferenceSession {
 public:
  InferenceSession(const Checkpoint& ckpt, const std::vector<ReferenceSegmentation>& references);

  // Advances one frame; returns one soft mask per object (all-zero for
  // objects whose reference frame lies in the future). frame is HxWx3 at the
  // model size.
  std::vector<Mask> step(const Image& frame);

  int frame_cursor() const { return cursor_; }
  int object_count() const { return static_cast<int>(objects_.size()); }
  int image_size() const { return spec_.base_image_size; }
  const RegressorSpec& spec() const { return spec_; }

 private:
  struct ObjectState {
    nn::Tensor ref_tensor;  // [1,4,H,W]
    nn::Tensor prev_mask;   // [1,1,H,W]
    SkipState skip;
    int active_from = 0;
  };
  RegressorSpec spec_;
  std::unique_ptr<Regressor> regressor_;
  std::vector<ObjectState> objects_;
  int cursor_ = 0;
};

InferenceSession init_session(const Checkpoint& ckpt,
                              const std::vector<ReferenceSegmentation>& references);

// Label map from per-object soft masks: argmax over objects where the top
// probability reaches bg_threshold, else background; ties go to the lowest
// object index.
LabelMap merge_objects(const std::vector<Mask>& per_object, double bg_threshold = 0.5);

struct SegmentationResult {
  std::vector<MaskTrack> tracks;  // per object, native resolution
  std::vector<LabelMap> labels;   // per frame, native resolution
  double fps = 0.0;
  std::vector<double> per_frame_ms;
};

// Runs the whole sequence: frames are resized to the model size, propagated
// per object, and the masks are resized back (nearest) before merging.
SegmentationResult segment_sequence(const Checkpoint& ckpt, const VideoSequence& video,
                                    const std::vector<ReferenceSegmentation>& references);

}  // namespace maskprop
