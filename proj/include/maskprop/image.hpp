#pragma once

#include <cstddef>
#include <vector>

#include "maskprop/error.hpp"

namespace maskprop {

// Planar image buffer: v[(ch*h + y)*w + x], values in [0,1].
// Frames use c == 3, masks c == 1.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  double& at(int y, int x, int ch = 0) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int y, int x, int ch = 0) const {
    return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }

  bool same_size(const Image& o) const { return h == o.h && w == o.w; }
  std::size_t numel() const { return v.size(); }
};

using Mask = Image;  // c == 1

inline Mask make_mask(int h, int w, double fill = 0.0) { return Mask(h, w, 1, fill); }

inline bool is_binary(const Mask& m) {
  for (double x : m.v)
    if (x != 0.0 && x != 1.0) return false;
  return true;
}

inline std::size_t foreground_count(const Mask& m) {
  std::size_t n = 0;
  for (double x : m.v) n += (x != 0.0);
  return n;
}

// Bilinear resize for frames; sampling uses half-pixel centers.
Image resize_bilinear(const Image& src, int oh, int ow);

// Nearest-neighbor resize for masks and label maps.
Image resize_nearest(const Image& src, int oh, int ow);

}  // namespace maskprop
