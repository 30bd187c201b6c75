#pragma once

#include <string>
#include <vector>

#include "maskprop/core.hpp"
#include "maskprop/nn/adam.hpp"
#include "maskprop/nn/ops.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

struct RegressorSpec {
  std::vector<int> encoder_channels{12, 16, 24, 32};
  int num_stages = 4;
  int global_conv_kernel = 7;
  int skip_reduction = 8;  // previous-frame features reduced to 1/skip_reduction
  int base_image_size = 64;
  int last_decoder_channels = 16;

  void validate() const;
  int skip_channels() const { return last_decoder_channels / skip_reduction; }
};

// Channel-reduced last-decoder-layer features of the previous frame; empty
// at the start of a sequence (treated as zeros).
struct SkipState {
  nn::Tensor feat;  // [N, skip_channels, H, W]
  bool empty() const { return !feat.defined(); }
  static SkipState none() { return SkipState{}; }
};

// Siamese encoder + global-convolution matching + decoder with a temporal
// skip connection. One parameter set serves both encoder invocations.
class Regressor {
 public:
  Regressor(RegressorSpec spec, Rng& rng);

  struct Encoded {
    nn::Tensor bottom;                // [N, C_top, H/2^s, W/2^s]
    std::vector<nn::Tensor> stages;   // per-stage outputs, shallow to deep
  };
  // input: [N, 4, H, W] (RGB + mask channel); H, W divisible by 2^num_stages.
  Encoded encode(const nn::Tensor& image_mask) const;

  // Concatenates reference/current features and applies the two separable
  // large-kernel branches (kx1*1xk + 1xk*kx1), summed.
  nn::Tensor global_match(const nn::Tensor& feat_ref, const nn::Tensor& feat_cur) const;

  struct Decoded {
    nn::Tensor logits;  // [N, 1, H, W]
    SkipState new_skip;
  };
  // full_res_input is the current [N,4,H,W] image-mask pair; the last
  // refinement stage concatenates it so the head sees full-resolution
  // evidence.
  Decoded decode(const nn::Tensor& matched, const SkipState& skip,
                 const std::vector<nn::Tensor>& enc_stages,
                 const nn::Tensor& full_res_input) const;

  struct Forwarded {
    nn::Tensor pred;  // sigmoid(logits) in [0,1]
    SkipState skip;
  };
  // frame: [N,3,H,W], reference: [N,4,H,W], prev_mask: [N,1,H,W].
  Forwarded forward(const nn::Tensor& frame, const nn::Tensor& reference,
                    const nn::Tensor& prev_mask, const SkipState& skip) const;

  struct Rollout {
    std::vector<nn::Tensor> preds;  // K soft masks, each [N,1,H,W]
    SkipState final_skip;
  };
  // Sequential forward over K frames; each prediction and skip state feeds
  // the next frame, so the whole chain is differentiable end to end.
  Rollout rollout(const std::vector<nn::Tensor>& frames, const nn::Tensor& reference,
                  const nn::Tensor& prior_mask, const SkipState& initial_skip) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const RegressorSpec& spec() const { return spec_; }
  std::int64_t encoder_param_count() const;

 private:
  RegressorSpec spec_;
  nn::ParamStore params_;
  std::vector<nn::Tensor> enc_w_, enc_b_;
  nn::Tensor ma0_w_, ma0_b_, ma1_w_, ma1_b_, mb0_w_, mb0_b_, mb1_w_, mb1_b_;
  std::vector<nn::Tensor> dec_w_, dec_b_;
  nn::Tensor fuse_w_, fuse_b_, out_w_, out_b_, skipred_w_, skipred_b_;
};

}  // namespace maskprop
