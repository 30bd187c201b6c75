#include "maskprop/nn/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

namespace maskprop::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(what) + ": shape mismatch");
}

void check_rank4(const Tensor& a, const char* what) {
  if (a.shape().size() != 4) throw ShapeError(std::string(what) + ": expected NCHW tensor");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](const Tensor& gy) { return std::vector<Tensor>{gy, gy}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& gy) {
    return std::vector<Tensor>{mul(gy, b), mul(gy, a)};
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (auto& x : out) x *= s;
  return make_op(a.shape(), std::move(out), {a}, [s](const Tensor& gy) {
    return std::vector<Tensor>{scale(gy, s)};
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& x : out) x += c;
  return make_op(a.shape(), std::move(out), {a},
                 [](const Tensor& gy) { return std::vector<Tensor>{gy}; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor log_(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = std::log(x);
  return make_op(a.shape(), std::move(out), {a}, [a](const Tensor& gy) {
    return std::vector<Tensor>{mul(gy, recip(a))};
  });
}

Tensor recip(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = 1.0 / x;
  return make_op(a.shape(), std::move(out), {a}, [a](const Tensor& gy) {
    Tensor r = recip(a);
    return std::vector<Tensor>{neg(mul(gy, mul(r, r)))};
  });
}

Tensor sqrt_(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = std::sqrt(x);
  return make_op(a.shape(), std::move(out), {a}, [a](const Tensor& gy) {
    return std::vector<Tensor>{scale(mul(gy, recip(sqrt_(a))), 0.5)};
  });
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data());
  for (auto& x : out) x = 1.0 / (1.0 + std::exp(-x));
  // d/dx = y*(1-y); y captured as a constant, second order is never taken
  // through sigmoid.
  std::vector<double> dv(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) dv[i] = out[i] * (1.0 - out[i]);
  Tensor deriv = Tensor::from(a.shape(), std::move(dv));
  return make_op(a.shape(), std::move(out), {a}, [deriv](const Tensor& gy) {
    return std::vector<Tensor>{mul(gy, deriv)};
  });
}

Tensor leaky_relu(const Tensor& a, double alpha) {
  std::vector<double> out(a.data());
  std::vector<double> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = out[i] > 0.0 ? 1.0 : alpha;
    out[i] *= mask[i];
  }
  Tensor m = Tensor::from(a.shape(), std::move(mask));
  return make_op(a.shape(), std::move(out), {a}, [m](const Tensor& gy) {
    return std::vector<Tensor>{mul(gy, m)};
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.data());
  std::vector<double> mask(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = (out[i] > lo && out[i] < hi) ? 1.0 : 0.0;
    out[i] = std::min(hi, std::max(lo, out[i]));
  }
  Tensor m = Tensor::from(a.shape(), std::move(mask));
  return make_op(a.shape(), std::move(out), {a}, [m](const Tensor& gy) {
    return std::vector<Tensor>{mul(gy, m)};
  });
}

Tensor concat_ch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_ch: no inputs");
  check_rank4(parts[0], "concat_ch");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int ctot = 0;
  for (const auto& p : parts) {
    check_rank4(p, "concat_ch");
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
      throw ShapeError("concat_ch: incompatible shapes");
    ctot += p.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * ctot * plane);
  for (int ni = 0; ni < n; ++ni) {
    std::size_t off = static_cast<std::size_t>(ni) * ctot * plane;
    for (const auto& p : parts) {
      const int pc = p.dim(1);
      const double* src = p.data().data() + static_cast<std::size_t>(ni) * pc * plane;
      std::memcpy(out.data() + off, src, sizeof(double) * pc * plane);
      off += static_cast<std::size_t>(pc) * plane;
    }
  }
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    c0 += p.dim(1);
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return make_op({n, ctot, h, w}, std::move(out), parts, [offsets, widths](const Tensor& gy) {
    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < offsets.size(); ++i)
      grads.push_back(slice_ch(gy, offsets[i], offsets[i] + widths[i]));
    return grads;
  });
}

Tensor slice_ch(const Tensor& a, int c0, int c1) {
  check_rank4(a, "slice_ch");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_ch: bad channel range");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int oc = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(n) * oc * plane);
  for (int ni = 0; ni < n; ++ni)
    std::memcpy(out.data() + static_cast<std::size_t>(ni) * oc * plane,
                a.data().data() + (static_cast<std::size_t>(ni) * c + c0) * plane,
                sizeof(double) * oc * plane);
  return make_op({n, oc, h, w}, std::move(out), {a}, [c0, c](const Tensor& gy) {
    return std::vector<Tensor>{embed_ch(gy, c0, c)};
  });
}

Tensor embed_ch(const Tensor& a, int c0, int total_c) {
  check_rank4(a, "embed_ch");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (c0 < 0 || c0 + c > total_c) throw ShapeError("embed_ch: bad channel range");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * total_c * plane, 0.0);
  for (int ni = 0; ni < n; ++ni)
    std::memcpy(out.data() + (static_cast<std::size_t>(ni) * total_c + c0) * plane,
                a.data().data() + static_cast<std::size_t>(ni) * c * plane,
                sizeof(double) * c * plane);
  return make_op({n, total_c, h, w}, std::move(out), {a}, [c0, c](const Tensor& gy) {
    return std::vector<Tensor>{slice_ch(gy, c0, c0 + c)};
  });
}

Tensor bcast_ch1(const Tensor& m, int channels) {
  check_rank4(m, "bcast_ch1");
  if (m.dim(1) != 1) throw ShapeError("bcast_ch1: expected single channel");
  const int n = m.dim(0), h = m.dim(2), w = m.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * channels * plane);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < channels; ++ci)
      std::memcpy(out.data() + (static_cast<std::size_t>(ni) * channels + ci) * plane,
                  m.data().data() + static_cast<std::size_t>(ni) * plane, sizeof(double) * plane);
  return make_op({n, channels, h, w}, std::move(out), {m}, [](const Tensor& gy) {
    return std::vector<Tensor>{sum_ch_keep1(gy)};
  });
}

Tensor sum_ch_keep1(const Tensor& a) {
  check_rank4(a, "sum_ch_keep1");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * plane, 0.0);
  const auto& av = a.data();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = av.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      double* dst = out.data() + static_cast<std::size_t>(ni) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  return make_op({n, 1, h, w}, std::move(out), {a}, [c](const Tensor& gy) {
    return std::vector<Tensor>{bcast_ch1(gy, c)};
  });
}

Tensor bcast_channel_full(const Tensor& b, int n, int h, int w) {
  if (b.shape().size() != 1) throw ShapeError("bcast_channel_full: expected rank-1 tensor");
  const int c = b.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * c * plane);
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      double* dst = out.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      const double val = b.data()[ci];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = val;
    }
  return make_op({n, c, h, w}, std::move(out), {b}, [](const Tensor& gy) {
    return std::vector<Tensor>{sum_to_channel(gy)};
  });
}

Tensor sum_to_channel(const Tensor& a) {
  check_rank4(a, "sum_to_channel");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(c, 0.0);
  const auto& av = a.data();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = av.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out[ci] += acc;
    }
  return make_op({c}, std::move(out), {a}, [n, h, w](const Tensor& gy) {
    return std::vector<Tensor>{bcast_channel_full(gy, n, h, w)};
  });
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  auto shape = a.shape();
  return make_op({}, {acc}, {a}, [shape](const Tensor& gy) {
    return std::vector<Tensor>{broadcast_full(gy, shape)};
  });
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor broadcast_full(const Tensor& s, const std::vector<int>& shape) {
  if (s.numel() != 1) throw ShapeError("broadcast_full: expected scalar");
  std::vector<double> out(numel_of(shape), s.data()[0]);
  return make_op(shape, std::move(out), {s}, [](const Tensor& gy) {
    return std::vector<Tensor>{sum_all(gy)};
  });
}

Tensor sum_per_sample(const Tensor& a) {
  if (a.shape().empty()) throw ShapeError("sum_per_sample: rank-0 tensor");
  const int n = a.dim(0);
  const std::size_t per = static_cast<std::size_t>(a.numel() / n);
  std::vector<double> out(n, 0.0);
  for (int ni = 0; ni < n; ++ni) {
    const double* src = a.data().data() + ni * per;
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += src[i];
    out[ni] = acc;
  }
  auto shape = a.shape();
  return make_op({n}, std::move(out), {a}, [shape](const Tensor& gy) {
    return std::vector<Tensor>{broadcast_per_sample(gy, shape)};
  });
}

Tensor mean_per_sample(const Tensor& a) {
  const int n = a.dim(0);
  return scale(sum_per_sample(a), static_cast<double>(n) / static_cast<double>(a.numel()));
}

Tensor broadcast_per_sample(const Tensor& s, const std::vector<int>& shape) {
  if (s.shape().size() != 1 || s.dim(0) != shape[0])
    throw ShapeError("broadcast_per_sample: leading dim mismatch");
  const int n = shape[0];
  const std::size_t per = static_cast<std::size_t>(numel_of(shape) / n);
  std::vector<double> out(numel_of(shape));
  for (int ni = 0; ni < n; ++ni) {
    const double val = s.data()[ni];
    double* dst = out.data() + ni * per;
    for (std::size_t i = 0; i < per; ++i) dst[i] = val;
  }
  return make_op(shape, std::move(out), {s}, [](const Tensor& gy) {
    return std::vector<Tensor>{sum_per_sample(gy)};
  });
}

Tensor upsample_nearest2(const Tensor& a) {
  check_rank4(a, "upsample_nearest2");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n) * c * 4 * h * w);
  const auto& av = a.data();
  for (int nc = 0; nc < n * c; ++nc) {
    const double* src = av.data() + static_cast<std::size_t>(nc) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(nc) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x) dst[y * 2 * w + x] = src[(y / 2) * w + (x / 2)];
  }
  return make_op({n, c, 2 * h, 2 * w}, std::move(out), {a}, [](const Tensor& gy) {
    return std::vector<Tensor>{downsample_sum2(gy)};
  });
}

Tensor downsample_sum2(const Tensor& a) {
  check_rank4(a, "downsample_sum2");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (h % 2 || w % 2) throw ShapeError("downsample_sum2: odd spatial size");
  const int oh = h / 2, ow = w / 2;
  std::vector<double> out(static_cast<std::size_t>(n) * c * oh * ow, 0.0);
  const auto& av = a.data();
  for (int nc = 0; nc < n * c; ++nc) {
    const double* src = av.data() + static_cast<std::size_t>(nc) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(nc) * oh * ow;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) dst[(y / 2) * ow + (x / 2)] += src[y * w + x];
  }
  return make_op({n, c, oh, ow}, std::move(out), {a}, [](const Tensor& gy) {
    return std::vector<Tensor>{upsample_nearest2(gy)};
  });
}

namespace {

struct ConvDims {
  int n, ic, h, w, oc, kh, kw, oh, ow, stride, ph, pw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int ph, int pw) {
  check_rank4(x, "conv2d input");
  check_rank4(w, "conv2d weight");
  ConvDims d{};
  d.n = x.dim(0);
  d.ic = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.oc = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.ph = ph;
  d.pw = pw;
  if (w.dim(1) != d.ic) throw ShapeError("conv2d: input channels do not match weight");
  const int numer_h = d.h + 2 * ph - d.kh;
  const int numer_w = d.w + 2 * pw - d.kw;
  if (numer_h < 0 || numer_w < 0)
    throw ShapeError("conv2d: input smaller than kernel");
  d.oh = numer_h / stride + 1;  // floor semantics
  d.ow = numer_w / stride + 1;
  return d;
}

// col[(ic*kh+r)*kw+s, oh*ow] from one sample.
void im2col(const double* x, const ConvDims& d, double* col) {
  const int K = d.ic * d.kh * d.kw;
  for (int row = 0; row < K; ++row) {
    const int s = row % d.kw;
    const int r = (row / d.kw) % d.kh;
    const int ic = row / (d.kw * d.kh);
    const double* xp = x + static_cast<std::size_t>(ic) * d.h * d.w;
    double* cp = col + static_cast<std::size_t>(row) * d.oh * d.ow;
    for (int oy = 0; oy < d.oh; ++oy) {
      const int iy = oy * d.stride - d.ph + r;
      if (iy < 0 || iy >= d.h) {
        for (int ox = 0; ox < d.ow; ++ox) cp[oy * d.ow + ox] = 0.0;
        continue;
      }
      for (int ox = 0; ox < d.ow; ++ox) {
        const int ix = ox * d.stride - d.pw + s;
        cp[oy * d.ow + ox] = (ix < 0 || ix >= d.w) ? 0.0 : xp[iy * d.w + ix];
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* x) {
  const int K = d.ic * d.kh * d.kw;
  for (int row = 0; row < K; ++row) {
    const int s = row % d.kw;
    const int r = (row / d.kw) % d.kh;
    const int ic = row / (d.kw * d.kh);
    double* xp = x + static_cast<std::size_t>(ic) * d.h * d.w;
    const double* cp = col + static_cast<std::size_t>(row) * d.oh * d.ow;
    for (int oy = 0; oy < d.oh; ++oy) {
      const int iy = oy * d.stride - d.ph + r;
      if (iy < 0 || iy >= d.h) continue;
      for (int ox = 0; ox < d.ow; ++ox) {
        const int ix = ox * d.stride - d.pw + s;
        if (ix >= 0 && ix < d.w) xp[iy * d.w + ix] += cp[oy * d.ow + ox];
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int ph, int pw) {
  const ConvDims d = conv_dims(x, w, stride, ph, pw);
  const int K = d.ic * d.kh * d.kw;
  std::vector<double> out(static_cast<std::size_t>(d.n) * d.oc * d.oh * d.ow);
  MapC wm(w.data().data(), d.oc, K);
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(K) * d.oh * d.ow);
#pragma omp for
    for (int ni = 0; ni < d.n; ++ni) {
      im2col(x.data().data() + static_cast<std::size_t>(ni) * d.ic * d.h * d.w, d, col.data());
      MapC cm(col.data(), K, d.oh * d.ow);
      MapM om(out.data() + static_cast<std::size_t>(ni) * d.oc * d.oh * d.ow, d.oc, d.oh * d.ow);
      om.noalias() = wm * cm;
    }
  }
  return make_op({d.n, d.oc, d.oh, d.ow}, std::move(out), {x, w},
                 [x, w, stride, ph, pw, d](const Tensor& gy) {
                   std::vector<Tensor> g(2);
                   if (x.requires_grad())
                     g[0] = conv2d_input_grad(gy, w, stride, ph, pw, d.h, d.w);
                   if (w.requires_grad())
                     g[1] = conv2d_weight_grad(x, gy, stride, ph, pw, d.kh, d.kw);
                   return g;
                 });
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int stride, int ph, int pw, int in_h,
                         int in_w) {
  check_rank4(gy, "conv2d_input_grad");
  check_rank4(w, "conv2d_input_grad weight");
  ConvDims d{};
  d.n = gy.dim(0);
  d.oc = w.dim(0);
  d.ic = w.dim(1);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.h = in_h;
  d.w = in_w;
  d.oh = gy.dim(2);
  d.ow = gy.dim(3);
  d.stride = stride;
  d.ph = ph;
  d.pw = pw;
  if (gy.dim(1) != d.oc) throw ShapeError("conv2d_input_grad: channel mismatch");
  const int K = d.ic * d.kh * d.kw;
  std::vector<double> out(static_cast<std::size_t>(d.n) * d.ic * d.h * d.w, 0.0);
  MapC wm(w.data().data(), d.oc, K);
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(K) * d.oh * d.ow);
#pragma omp for
    for (int ni = 0; ni < d.n; ++ni) {
      MapC gm(gy.data().data() + static_cast<std::size_t>(ni) * d.oc * d.oh * d.ow, d.oc,
              d.oh * d.ow);
      MapM cm(col.data(), K, d.oh * d.ow);
      cm.noalias() = wm.transpose() * gm;
      col2im_add(col.data(), d, out.data() + static_cast<std::size_t>(ni) * d.ic * d.h * d.w);
    }
  }
  return make_op({d.n, d.ic, d.h, d.w}, std::move(out), {gy, w},
                 [gy, w, stride, ph, pw, d](const Tensor& gu) {
                   std::vector<Tensor> g(2);
                   if (gy.requires_grad()) g[0] = conv2d(gu, w, stride, ph, pw);
                   if (w.requires_grad())
                     g[1] = conv2d_weight_grad(gu, gy, stride, ph, pw, d.kh, d.kw);
                   return g;
                 });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int ph, int pw, int kh,
                          int kw) {
  check_rank4(x, "conv2d_weight_grad");
  check_rank4(gy, "conv2d_weight_grad gy");
  ConvDims d{};
  d.n = x.dim(0);
  d.ic = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.oc = gy.dim(1);
  d.kh = kh;
  d.kw = kw;
  d.oh = gy.dim(2);
  d.ow = gy.dim(3);
  d.stride = stride;
  d.ph = ph;
  d.pw = pw;
  if (gy.dim(0) != d.n) throw ShapeError("conv2d_weight_grad: batch mismatch");
  const int K = d.ic * d.kh * d.kw;
  // Per-sample partials summed in index order so results do not depend on
  // the number of threads.
  std::vector<std::vector<double>> partial(d.n);
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(K) * d.oh * d.ow);
#pragma omp for
    for (int ni = 0; ni < d.n; ++ni) {
      partial[ni].resize(static_cast<std::size_t>(d.oc) * K);
      im2col(x.data().data() + static_cast<std::size_t>(ni) * d.ic * d.h * d.w, d, col.data());
      MapC cm(col.data(), K, d.oh * d.ow);
      MapC gm(gy.data().data() + static_cast<std::size_t>(ni) * d.oc * d.oh * d.ow, d.oc,
              d.oh * d.ow);
      MapM pm(partial[ni].data(), d.oc, K);
      pm.noalias() = gm * cm.transpose();
    }
  }
  std::vector<double> out(static_cast<std::size_t>(d.oc) * K, 0.0);
  for (int ni = 0; ni < d.n; ++ni)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += partial[ni][i];
  return make_op({d.oc, d.ic, d.kh, d.kw}, std::move(out), {x, gy},
                 [x, gy, stride, ph, pw, d](const Tensor& gv) {
                   std::vector<Tensor> g(2);
                   if (x.requires_grad())
                     g[0] = conv2d_input_grad(gy, gv, stride, ph, pw, d.h, d.w);
                   if (gy.requires_grad()) g[1] = conv2d(x, gv, stride, ph, pw);
                   return g;
                 });
}

Tensor conv_bias(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int ph, int pw) {
  Tensor y = conv2d(x, w, stride, ph, pw);
  return add(y, bcast_channel_full(b, y.dim(0), y.dim(2), y.dim(3)));
}

}  // namespace maskprop::nn
