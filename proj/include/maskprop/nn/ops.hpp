#pragma once

#include "maskprop/nn/tensor.hpp"

namespace maskprop::nn {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor log_(const Tensor& a);
Tensor recip(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double alpha);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- shape / channel ----
Tensor concat_ch(const std::vector<Tensor>& parts);          // NCHW, along C
Tensor slice_ch(const Tensor& a, int c0, int c1);            // channels [c0, c1)
Tensor embed_ch(const Tensor& a, int c0, int total_c);       // zero-pad channels
Tensor bcast_ch1(const Tensor& m, int channels);             // [N,1,H,W] -> [N,C,H,W]
Tensor sum_ch_keep1(const Tensor& a);                        // [N,C,H,W] -> [N,1,H,W]
Tensor bcast_channel_full(const Tensor& b, int n, int h, int w);  // [C] -> [N,C,H,W]
Tensor sum_to_channel(const Tensor& a);                      // [N,C,H,W] -> [C]

// ---- reductions / broadcasts ----
Tensor sum_all(const Tensor& a);                              // -> scalar
Tensor mean_all(const Tensor& a);
Tensor broadcast_full(const Tensor& s, const std::vector<int>& shape);  // scalar -> shape
Tensor sum_per_sample(const Tensor& a);                       // [N,...] -> [N]
Tensor mean_per_sample(const Tensor& a);
Tensor broadcast_per_sample(const Tensor& s, const std::vector<int>& shape);  // [N] -> [N,...]

// ---- spatial ----
Tensor upsample_nearest2(const Tensor& a);                    // [N,C,H,W] -> [N,C,2H,2W]
Tensor downsample_sum2(const Tensor& a);                      // adjoint of the above

// ---- convolutions ----
// x: [N,IC,H,W], w: [OC,IC,KH,KW] -> [N,OC,OH,OW] with
// OH = (H + 2*ph - KH)/stride + 1 (exact division enforced by callers).
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int ph, int pw);
// gy: [N,OC,OH,OW], w as above -> [N,IC,in_h,in_w] (transposed conv).
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int stride, int ph, int pw, int in_h,
                         int in_w);
// x: [N,IC,H,W], gy: [N,OC,OH,OW] -> [OC,IC,kh,kw].
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int ph, int pw, int kh,
                          int kw);

// conv + per-channel bias
Tensor conv_bias(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int ph, int pw);

}  // namespace maskprop::nn
