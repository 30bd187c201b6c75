#pragma once

#include <vector>

#include "maskprop/image.hpp"
#include "maskprop/nn/adam.hpp"
#include "maskprop/nn/ops.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

struct CriticSpec {
  int num_down = 6;  // stride-2 convs; score map is H/2^num_down x W/2^num_down
  int base_channels = 16;
  int input_channels = 3;  // 3 for the spatial critic, 3*K for the temporal one

  void validate() const;
};

// Element-wise product of an RGB frame and a soft mask broadcast over the
// three channels.
struct MaskedImage {
  Image rgb;
};

MaskedImage mask_image(const Image& frame, const Mask& mask);
// Tensor form: frame [N,3,H,W] (or [N,3K,H,W] stacks), mask [N,1,H,W].
nn::Tensor mask_image(const nn::Tensor& frame, const nn::Tensor& mask);

// PatchGAN-style WGAN critic: stride-2 4x4 convs with leaky units, no
// normalization, no output nonlinearity. Scores are unbounded reals.
class Critic {
 public:
  Critic(CriticSpec spec, Rng& rng);

  // input: [N, input_channels, H, W] with H, W divisible by 2^num_down.
  nn::Tensor score(const nn::Tensor& masked) const;

  // Spatial critic entry: one masked frame.
  nn::Tensor spatial_score(const nn::Tensor& masked) const;
  // Temporal critic entry: K masked frames stacked oldest-first.
  nn::Tensor temporal_score(const std::vector<nn::Tensor>& masked_stack) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const CriticSpec& spec() const { return spec_; }

 private:
  CriticSpec spec_;
  nn::ParamStore params_;
  std::vector<nn::Tensor> w_, b_;
  nn::Tensor final_w_, final_b_;
};

}  // namespace maskprop
