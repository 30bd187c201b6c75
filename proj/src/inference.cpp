#include "maskprop/inference.hpp"

#include <chrono>

#include "maskprop/error.hpp"
#include "maskprop/nn/bridge.hpp"

namespace maskprop {

using nn::Tensor;

namespace {

RegressorSpec spec_from_meta(const nlohmann::json& j) {
  RegressorSpec s;
  s.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  s.num_stages = j.at("num_stages").get<int>();
  s.global_conv_kernel = j.at("global_conv_kernel").get<int>();
  s.skip_reduction = j.at("skip_reduction").get<int>();
  s.base_image_size = j.at("base_image_size").get<int>();
  s.last_decoder_channels = j.at("last_decoder_channels").get<int>();
  return s;
}

}  // namespace

InferenceSession::InferenceSession(const Checkpoint& ckpt,
                                   const std::vector<ReferenceSegmentation>& references) {
  if (references.empty()) throw Error("init_session: at least one reference required");
  if (!ckpt.meta.contains("regressor_spec"))
    throw Error("init_session: checkpoint has no regressor spec");
  spec_ = spec_from_meta(ckpt.meta.at("regressor_spec"));
  Rng dummy(0);
  regressor_ = std::make_unique<Regressor>(spec_, dummy);
  if (!ckpt.has("regressor/" + regressor_->params().name(0)))
    throw Error("init_session: checkpoint is missing regressor weights");
  ckpt.load_params("regressor", regressor_->params());
  // Test-time contract: the critics are discarded. Loading must not have
  // touched their namespaces.
  for (const auto& key : ckpt.accessed())
    if (key.rfind("critic_s/", 0) == 0 || key.rfind("critic_t/", 0) == 0)
      throw Error("init_session: inference path touched critic parameters: " + key);

  const int size = spec_.base_image_size;
  for (const auto& ref : references) {
    if (ref.frame.h != size || ref.frame.w != size || ref.mask.h != size || ref.mask.w != size)
      throw ShapeError("init_session: reference size does not match model size " +
                       std::to_string(size));
    if (foreground_count(ref.mask) == 0)
      throw EmptyMaskError("init_session: reference mask has no foreground: " + ref.object_id);
    ObjectState obj;
    Image cat(size, size, 4);
    std::copy(ref.frame.v.begin(), ref.frame.v.end(), cat.v.begin());
    std::copy(ref.mask.v.begin(), ref.mask.v.end(), cat.v.begin() + ref.frame.v.size());
    obj.ref_tensor = nn::tensor_from_image(cat);
    obj.prev_mask = nn::tensor_from_image(ref.mask);  // propagation seed
    obj.skip = SkipState::none();
    obj.active_from = ref.frame_index;
    objects_.push_back(std::move(obj));
  }
}

InferenceSession init_session(const Checkpoint& ckpt,
                              const std::vector<ReferenceSegmentation>& references) {
  return InferenceSession(ckpt, references);
}

std::vector<Mask> InferenceSession::step(const Image& frame) {
  const int size = spec_.base_image_size;
  if (frame.h != size || frame.w != size || frame.c != 3)
    throw ShapeError("step: frame size does not match model size");
  Tensor frame_t = nn::tensor_from_image(frame);
  std::vector<Mask> out;
  for (auto& obj : objects_) {
    if (cursor_ < obj.active_from) {
      out.push_back(make_mask(size, size, 0.0));
      continue;
    }
    auto fwd = regressor_->forward(frame_t, obj.ref_tensor, obj.prev_mask, obj.skip);
    // Detach so the session never accumulates the tape across frames.
    obj.prev_mask = fwd.pred.detach();
    obj.skip.feat = fwd.skip.feat.detach();
    out.push_back(nn::image_from_tensor(obj.prev_mask, 0));
  }
  ++cursor_;
  return out;
}

LabelMap merge_objects(const std::vector<Mask>& per_object, double bg_threshold) {
  if (per_object.empty()) throw Error("merge_objects: no objects");
  const int h = per_object[0].h, w = per_object[0].w;
  for (const auto& m : per_object)
    if (m.h != h || m.w != w) throw ShapeError("merge_objects: mask sizes differ");
  LabelMap map;
  map.h = h;
  map.w = w;
  map.labels.assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = 0.0;
      int label = 0;
      for (std::size_t i = 0; i < per_object.size(); ++i) {
        const double p = per_object[i].at(y, x);
        if (p > best) {  // strict: exact ties keep the lowest index
          best = p;
          label = static_cast<int>(i) + 1;
        }
      }
      if (best < bg_threshold) label = 0;
      map.labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(label);
    }
  return map;
}

SegmentationResult segment_sequence(const Checkpoint& ckpt, const VideoSequence& video,
                                    const std::vector<ReferenceSegmentation>& references) {
  auto violations = validate_sequence(video);
  if (!violations.empty()) throw Error("segment_sequence: invalid video: " + violations.front());

  RegressorSpec spec = spec_from_meta(ckpt.meta.at("regressor_spec"));
  const int size = spec.base_image_size;
  std::vector<ReferenceSegmentation> sized;
  for (const auto& ref : references) {
    ReferenceSegmentation r = ref;
    r.frame = resize_bilinear(ref.frame, size, size);
    r.mask = resize_nearest(ref.mask, size, size);
    sized.push_back(std::move(r));
  }
  InferenceSession session(ckpt, sized);

  SegmentationResult result;
  result.tracks.resize(references.size());
  for (std::size_t i = 0; i < references.size(); ++i)
    result.tracks[i].object_id = references[i].object_id;

  const int native_h = video.height(), native_w = video.width();
  double total_ms = 0.0;
  for (const Image& frame : video.frames) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Mask> masks = session.step(resize_bilinear(frame, size, size));
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.per_frame_ms.push_back(ms);
    total_ms += ms;
    std::vector<Mask> native;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      native.push_back(resize_nearest(masks[i], native_h, native_w));
      result.tracks[i].soft_masks.push_back(native.back());
    }
    result.labels.push_back(merge_objects(native));
  }
  result.fps = total_ms > 0 ? 1000.0 * static_cast<double>(video.frame_count()) / total_ms : 0.0;
  return result;
}

}  // namespace maskprop
