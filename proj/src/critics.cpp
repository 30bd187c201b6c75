#include "maskprop/critics.hpp"

#include <algorithm>

#include "maskprop/error.hpp"

namespace maskprop {

using nn::Tensor;

void CriticSpec::validate() const {
  if (num_down < 1) throw ConfigError("num_down must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (input_channels < 1 || input_channels % 3 != 0)
    throw ConfigError("input_channels must be a positive multiple of 3");
}

MaskedImage mask_image(const Image& frame, const Mask& mask) {
  if (!frame.same_size(mask)) throw ShapeError("mask_image: size mismatch");
  MaskedImage out;
  out.rgb = frame;
  for (int ch = 0; ch < frame.c; ++ch)
    for (int y = 0; y < frame.h; ++y)
      for (int x = 0; x < frame.w; ++x) out.rgb.at(y, x, ch) *= mask.at(y, x);
  return out;
}

nn::Tensor mask_image(const nn::Tensor& frame, const nn::Tensor& mask) {
  if (frame.dim(0) != mask.dim(0) || frame.dim(2) != mask.dim(2) || frame.dim(3) != mask.dim(3))
    throw ShapeError("mask_image: size mismatch");
  if (mask.dim(1) != 1) throw ShapeError("mask_image: mask must be single-channel");
  return nn::mul(frame, nn::bcast_ch1(mask, frame.dim(1)));
}

Critic::Critic(CriticSpec spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  int in_c = spec_.input_channels;
  for (int i = 0; i < spec_.num_down; ++i) {
    const int out_c = spec_.base_channels * std::min(1 << i, 4);
    w_.push_back(params_.add_conv("down." + std::to_string(i) + ".w", out_c, in_c, 4, 4, rng));
    b_.push_back(params_.add_zeros("down." + std::to_string(i) + ".b", {out_c}));
    in_c = out_c;
  }
  final_w_ = params_.add_conv("final.w", 1, in_c, 3, 3, rng);
  final_b_ = params_.add_zeros("final.b", {1});
}

nn::Tensor Critic::score(const nn::Tensor& masked) const {
  if (masked.shape().size() != 4 || masked.dim(1) != spec_.input_channels)
    throw ShapeError("critic: expected [N," + std::to_string(spec_.input_channels) +
                     ",H,W] input");
  const int div = 1 << spec_.num_down;
  if (masked.dim(2) % div != 0 || masked.dim(3) % div != 0)
    throw ShapeError("critic: input size not divisible by 2^" + std::to_string(spec_.num_down));
  Tensor x = masked;
  for (int i = 0; i < spec_.num_down; ++i)
    x = nn::leaky_relu(nn::conv_bias(x, w_[i], b_[i], 2, 1, 1), 0.2);
  return nn::conv_bias(x, final_w_, final_b_, 1, 1, 1);  // no saturation layer
}

nn::Tensor Critic::spatial_score(const nn::Tensor& masked) const {
  if (spec_.input_channels != 3) throw ShapeError("spatial_score: critic is not spatial");
  return score(masked);
}

nn::Tensor Critic::temporal_score(const std::vector<nn::Tensor>& masked_stack) const {
  const int k = spec_.input_channels / 3;
  if (static_cast<int>(masked_stack.size()) != k)
    throw ShapeError("temporal_score: expected " + std::to_string(k) + " masked frames, got " +
                     std::to_string(masked_stack.size()));
  return score(nn::concat_ch(masked_stack));
}

}  // namespace maskprop
