#include "maskprop/image.hpp"

#include <algorithm>
#include <cmath>

namespace maskprop {

Image resize_bilinear(const Image& src, int oh, int ow) {
  if (src.h == oh && src.w == ow) return src;
  Image out(oh, ow, src.c);
  const double sy = static_cast<double>(src.h) / oh;
  const double sx = static_cast<double>(src.w) / ow;
  for (int c = 0; c < src.c; ++c)
    for (int y = 0; y < oh; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
      const int y0 = static_cast<int>(std::floor(fy));
      const int y1 = std::min(y0 + 1, src.h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < ow; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
        const int x0 = static_cast<int>(std::floor(fx));
        const int x1 = std::min(x0 + 1, src.w - 1);
        const double wx = fx - x0;
        const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  return out;
}

Image resize_nearest(const Image& src, int oh, int ow) {
  if (src.h == oh && src.w == ow) return src;
  Image out(oh, ow, src.c);
  const double sy = static_cast<double>(src.h) / oh;
  const double sx = static_cast<double>(src.w) / ow;
  for (int c = 0; c < src.c; ++c)
    for (int y = 0; y < oh; ++y) {
      int iy = std::min(src.h - 1, static_cast<int>((y + 0.5) * sy));
      for (int x = 0; x < ow; ++x) {
        int ix = std::min(src.w - 1, static_cast<int>((x + 0.5) * sx));
        out.at(y, x, c) = src.at(iy, ix, c);
      }
    }
  return out;
}

}  // namespace maskprop
