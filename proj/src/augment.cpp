#include "maskprop/augment.hpp"

#include <cmath>

#include "maskprop/error.hpp"

namespace maskprop {

AugmentParams sample_augment(Rng& rng) {
  AugmentParams p;
  p.hflip = rng.bernoulli(0.5);
  p.scale = rng.uniform(0.75, 1.25);
  p.rotation_deg = rng.uniform(-30.0, 30.0);
  return p;
}

namespace {

// reflect-101: ... 2 1 0 1 2 ... (no edge duplication)
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

double sample_bilinear(const Image& img, int ch, double fy, double fx) {
  const int y0 = static_cast<int>(std::floor(fy));
  const int x0 = static_cast<int>(std::floor(fx));
  const double wy = fy - y0, wx = fx - x0;
  const int ya = reflect(y0, img.h), yb = reflect(y0 + 1, img.h);
  const int xa = reflect(x0, img.w), xb = reflect(x0 + 1, img.w);
  const double top = img.at(ya, xa, ch) * (1 - wx) + img.at(ya, xb, ch) * wx;
  const double bot = img.at(yb, xa, ch) * (1 - wx) + img.at(yb, xb, ch) * wx;
  return top * (1 - wy) + bot * wy;
}

double sample_nearest(const Image& img, int ch, double fy, double fx) {
  const int y = reflect(static_cast<int>(std::lround(fy)), img.h);
  const int x = reflect(static_cast<int>(std::lround(fx)), img.w);
  return img.at(y, x, ch);
}

}  // namespace

std::pair<Image, Mask> apply_augment(const Image& frame, const Mask& mask,
                                     const AugmentParams& params, int out_h, int out_w) {
  if (!frame.same_size(mask)) throw ShapeError("apply_augment: frame/mask size mismatch");
  const double theta = params.rotation_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cy_out = (out_h - 1) / 2.0, cx_out = (out_w - 1) / 2.0;
  const double cy_in = (frame.h - 1) / 2.0, cx_in = (frame.w - 1) / 2.0;
  // Inverse of: resize-to-output, zoom by scale about the center, rotate.
  const double fy = frame.h / (params.scale * out_h);
  const double fx = frame.w / (params.scale * out_w);

  Image out_frame(out_h, out_w, frame.c);
  Mask out_mask = make_mask(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int xf = params.hflip ? out_w - 1 - x : x;
      const double dy = y - cy_out, dx = xf - cx_out;
      const double ry = ct * dy - st * dx;  // R(-theta)
      const double rx = st * dy + ct * dx;
      const double sy = cy_in + ry * fy;
      const double sx = cx_in + rx * fx;
      for (int ch = 0; ch < frame.c; ++ch)
        out_frame.at(y, x, ch) = sample_bilinear(frame, ch, sy, sx);
      out_mask.at(y, x) = sample_nearest(mask, 0, sy, sx) >= 0.5 ? 1.0 : 0.0;
    }
  return {std::move(out_frame), std::move(out_mask)};
}

}  // namespace maskprop
