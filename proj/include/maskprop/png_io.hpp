#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "maskprop/image.hpp"

namespace maskprop {

struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::uint8_t> labels;
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
};

// 8-bit RGB PNG; float values are quantized with round(v * 255).
void write_png_rgb(const std::string& path, const Image& img);
Image read_png_rgb(const std::string& path);

// 8-bit paletted PNG holding object labels (0 = background). The palette is
// the standard VOC/DAVIS colormap.
void write_png_indexed(const std::string& path, const LabelMap& map);
LabelMap read_png_indexed(const std::string& path);

// 8-bit grayscale PNG for soft masks.
void write_png_gray(const std::string& path, const Mask& mask);

std::array<std::uint8_t, 3> davis_palette_color(int index);

}  // namespace maskprop
