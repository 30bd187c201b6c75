#include "maskprop/regressor.hpp"

#include "maskprop/error.hpp"

namespace maskprop {

using nn::Tensor;

void RegressorSpec::validate() const {
  if (num_stages < 2) throw ConfigError("num_stages must be >= 2");
  if (static_cast<int>(encoder_channels.size()) != num_stages)
    throw ConfigError("encoder_channels must list one width per stage");
  for (int c : encoder_channels)
    if (c < 1) throw ConfigError("encoder channel widths must be >= 1");
  if (global_conv_kernel < 1 || global_conv_kernel % 2 == 0)
    throw ConfigError("global_conv_kernel must be odd");
  if (skip_reduction < 1 || last_decoder_channels % skip_reduction != 0)
    throw ConfigError("skip_reduction must divide the last decoder layer's channel count");
  if (base_image_size % (1 << num_stages) != 0)
    throw ConfigError("base_image_size must be divisible by 2^num_stages");
}

Regressor::Regressor(RegressorSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  const int n = spec_.num_stages;
  for (int i = 0; i < n; ++i) {
    const int in_c = i == 0 ? 4 : spec_.encoder_channels[i - 1];
    const int out_c = spec_.encoder_channels[i];
    enc_w_.push_back(params_.add_conv("enc." + std::to_string(i) + ".w", out_c, in_c, 3, 3, rng));
    enc_b_.push_back(params_.add_zeros("enc." + std::to_string(i) + ".b", {out_c}));
  }
  const int top = spec_.encoder_channels.back();
  const int k = spec_.global_conv_kernel;
  ma0_w_ = params_.add_conv("match.a0.w", top, 2 * top, k, 1, rng);
  ma0_b_ = params_.add_zeros("match.a0.b", {top});
  ma1_w_ = params_.add_conv("match.a1.w", top, top, 1, k, rng);
  ma1_b_ = params_.add_zeros("match.a1.b", {top});
  mb0_w_ = params_.add_conv("match.b0.w", top, 2 * top, 1, k, rng);
  mb0_b_ = params_.add_zeros("match.b0.b", {top});
  mb1_w_ = params_.add_conv("match.b1.w", top, top, k, 1, rng);
  mb1_b_ = params_.add_zeros("match.b1.b", {top});

  // Decoder: deepest stage first. Intermediate stages concat the encoder
  // features at the matching resolution; the last stage concats the raw
  // image-mask pair instead.
  int in_c = top;
  for (int i = 0; i < n; ++i) {
    const bool last = (i == n - 1);
    const int skip_c = last ? 4 : spec_.encoder_channels[n - 2 - i];
    const int out_c = last ? spec_.last_decoder_channels : spec_.encoder_channels[n - 2 - i];
    dec_w_.push_back(
        params_.add_conv("dec." + std::to_string(i) + ".w", out_c, in_c + skip_c, 3, 3, rng));
    dec_b_.push_back(params_.add_zeros("dec." + std::to_string(i) + ".b", {out_c}));
    in_c = out_c;
  }
  const int lc = spec_.last_decoder_channels;
  fuse_w_ = params_.add_conv("fuse.w", lc, lc + spec_.skip_channels(), 3, 3, rng);
  fuse_b_ = params_.add_zeros("fuse.b", {lc});
  out_w_ = params_.add_conv("out.w", 1, lc, 3, 3, rng);
  out_b_ = params_.add_zeros("out.b", {1});
  skipred_w_ = params_.add_conv("skipred.w", spec_.skip_channels(), lc, 3, 3, rng);
  skipred_b_ = params_.add_zeros("skipred.b", {spec_.skip_channels()});
}

std::int64_t Regressor::encoder_param_count() const {
  std::int64_t n = 0;
  for (const auto& t : enc_w_) n += t.numel();
  for (const auto& t : enc_b_) n += t.numel();
  return n;
}

Regressor::Encoded Regressor::encode(const nn::Tensor& image_mask) const {
  if (image_mask.shape().size() != 4 || image_mask.dim(1) != 4)
    throw ShapeError("encode: expected [N,4,H,W] input");
  const int h = image_mask.dim(2), w = image_mask.dim(3);
  const int div = 1 << spec_.num_stages;
  if (h % div != 0 || w % div != 0)
    throw ShapeError("encode: input size " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by 2^" + std::to_string(spec_.num_stages));
  Encoded out;
  Tensor x = image_mask;
  for (int i = 0; i < spec_.num_stages; ++i) {
    x = nn::leaky_relu(nn::conv_bias(x, enc_w_[i], enc_b_[i], 2, 1, 1), 0.1);
    out.stages.push_back(x);
  }
  out.bottom = x;
  return out;
}

nn::Tensor Regressor::global_match(const nn::Tensor& feat_ref, const nn::Tensor& feat_cur) const {
  if (feat_ref.shape() != feat_cur.shape())
    throw ShapeError("global_match: feature shapes differ");
  const int k = spec_.global_conv_kernel;
  const int p = (k - 1) / 2;
  Tensor cat = nn::concat_ch({feat_ref, feat_cur});
  Tensor a = nn::conv_bias(nn::conv_bias(cat, ma0_w_, ma0_b_, 1, p, 0), ma1_w_, ma1_b_, 1, 0, p);
  Tensor b = nn::conv_bias(nn::conv_bias(cat, mb0_w_, mb0_b_, 1, 0, p), mb1_w_, mb1_b_, 1, p, 0);
  return nn::leaky_relu(nn::add(a, b), 0.1);
}

Regressor::Decoded Regressor::decode(const nn::Tensor& matched, const SkipState& skip,
                                     const std::vector<nn::Tensor>& enc_stages,
                                     const nn::Tensor& full_res_input) const {
  const int n = spec_.num_stages;
  if (static_cast<int>(enc_stages.size()) != n)
    throw ShapeError("decode: expected one encoder feature map per stage");
  Tensor x = matched;
  for (int i = 0; i < n; ++i) {
    x = nn::upsample_nearest2(x);
    x = nn::concat_ch({x, i < n - 1 ? enc_stages[n - 2 - i] : full_res_input});
    x = nn::leaky_relu(nn::conv_bias(x, dec_w_[i], dec_b_[i], 1, 1, 1), 0.1);
  }
  Tensor skip_in;
  if (skip.empty()) {
    skip_in = Tensor::zeros({x.dim(0), spec_.skip_channels(), x.dim(2), x.dim(3)});
  } else {
    if (skip.feat.dim(2) != x.dim(2) || skip.feat.dim(3) != x.dim(3) ||
        skip.feat.dim(1) != spec_.skip_channels())
      throw ShapeError("decode: skip state shape mismatch");
    skip_in = skip.feat;
  }
  Tensor fused = nn::leaky_relu(
      nn::conv_bias(nn::concat_ch({x, skip_in}), fuse_w_, fuse_b_, 1, 1, 1), 0.1);
  Decoded out;
  out.logits = nn::conv_bias(fused, out_w_, out_b_, 1, 1, 1);
  out.new_skip.feat = nn::conv_bias(fused, skipred_w_, skipred_b_, 1, 1, 1);
  return out;
}

Regressor::Forwarded Regressor::forward(const nn::Tensor& frame, const nn::Tensor& reference,
                                        const nn::Tensor& prev_mask,
                                        const SkipState& skip) const {
  if (frame.dim(2) != prev_mask.dim(2) || frame.dim(3) != prev_mask.dim(3))
    throw ShapeError("forward: frame/prev_mask size mismatch");
  Tensor cur_input = nn::concat_ch({frame, prev_mask});
  Encoded ref = encode(reference);
  Encoded cur = encode(cur_input);
  Tensor matched = global_match(ref.bottom, cur.bottom);
  Decoded dec = decode(matched, skip, cur.stages, cur_input);
  Forwarded out;
  out.pred = nn::sigmoid(dec.logits);
  out.skip = dec.new_skip;
  return out;
}

Regressor::Rollout Regressor::rollout(const std::vector<nn::Tensor>& frames,
                                      const nn::Tensor& reference, const nn::Tensor& prior_mask,
                                      const SkipState& initial_skip) const {
  if (frames.empty()) throw ShapeError("rollout: empty window");
  Rollout out;
  Tensor prev = prior_mask;
  SkipState skip = initial_skip;
  for (const Tensor& frame : frames) {
    Forwarded f = forward(frame, reference, prev, skip);
    out.preds.push_back(f.pred);
    prev = f.pred;
    skip = f.skip;
  }
  out.final_skip = skip;
  return out;
}

}  // namespace maskprop
