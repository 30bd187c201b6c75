#include "maskprop/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "maskprop/error.hpp"

namespace maskprop {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

std::uint8_t quantize(double v) {
  double q = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
  return static_cast<std::uint8_t>(q);
}

void write_rows(const std::string& path, int h, int w, int color_type,
                const std::vector<std::uint8_t>& rowdata, int row_bytes, bool palette) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failure while writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> pal;
  if (palette) {
    pal.resize(256);
    for (int i = 0; i < 256; ++i) {
      auto c = davis_palette_color(i);
      pal[i] = {c[0], c[1], c[2]};
    }
    png_set_PLTE(png, info, pal.data(), 256);
  }
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(rowdata.data() + static_cast<std::size_t>(y) * row_bytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int h = 0, w = 0, channels = 0;
  bool palette = false;
  std::vector<std::uint8_t> bytes;  // h * w * channels
};

Decoded read_all(const std::string& path, bool keep_palette_indices) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw IoError("not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  Decoded out;
  out.palette = (color_type == PNG_COLOR_TYPE_PALETTE);

  if (bit_depth == 16) png_set_strip_16(png);
  if (out.palette && !keep_palette_indices) png_set_palette_to_rgb(png);
  if (out.palette && keep_palette_indices && bit_depth < 8) png_set_packing(png);
  if (!out.palette) {
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out.h = static_cast<int>(png_get_image_height(png, info));
  out.w = static_cast<int>(png_get_image_width(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.bytes.resize(row_bytes * out.h);
  std::vector<png_bytep> rows(out.h);
  for (int y = 0; y < out.h; ++y) rows[y] = out.bytes.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::array<std::uint8_t, 3> davis_palette_color(int index) {
  // Standard VOC colormap: bits of the index distributed over the channels.
  std::array<std::uint8_t, 3> c{0, 0, 0};
  int id = index;
  for (int shift = 7; shift >= 0 && id; --shift) {
    c[0] = static_cast<std::uint8_t>(c[0] | ((id >> 0) & 1) << shift);
    c[1] = static_cast<std::uint8_t>(c[1] | ((id >> 1) & 1) << shift);
    c[2] = static_cast<std::uint8_t>(c[2] | ((id >> 2) & 1) << shift);
    id >>= 3;
  }
  return c;
}

void write_png_rgb(const std::string& path, const Image& img) {
  if (img.c != 3) throw ShapeError("write_png_rgb: expected 3-channel image");
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        rows[(static_cast<std::size_t>(y) * img.w + x) * 3 + ch] = quantize(img.at(y, x, ch));
  write_rows(path, img.h, img.w, PNG_COLOR_TYPE_RGB, rows, img.w * 3, false);
}

Image read_png_rgb(const std::string& path) {
  Decoded d = read_all(path, /*keep_palette_indices=*/false);
  if (d.channels != 3 && d.channels != 1)
    throw IoError("unsupported channel count in " + path);
  Image img(d.h, d.w, 3);
  for (int y = 0; y < d.h; ++y)
    for (int x = 0; x < d.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const std::size_t idx = (static_cast<std::size_t>(y) * d.w + x) * d.channels +
                                (d.channels == 3 ? ch : 0);
        img.at(y, x, ch) = d.bytes[idx] / 255.0;
      }
  return img;
}

void write_png_indexed(const std::string& path, const LabelMap& map) {
  if (static_cast<int>(map.labels.size()) != map.h * map.w)
    throw ShapeError("write_png_indexed: label buffer size mismatch");
  write_rows(path, map.h, map.w, PNG_COLOR_TYPE_PALETTE, map.labels, map.w, true);
}

LabelMap read_png_indexed(const std::string& path) {
  Decoded d = read_all(path, /*keep_palette_indices=*/true);
  if (d.channels != 1)
    throw IoError("annotation is not an indexed/grayscale PNG: " + path);
  LabelMap map;
  map.h = d.h;
  map.w = d.w;
  map.labels = std::move(d.bytes);
  return map;
}

void write_png_gray(const std::string& path, const Mask& mask) {
  if (mask.c != 1) throw ShapeError("write_png_gray: expected single-channel mask");
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(mask.h) * mask.w);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      rows[static_cast<std::size_t>(y) * mask.w + x] = quantize(mask.at(y, x));
  write_rows(path, mask.h, mask.w, PNG_COLOR_TYPE_GRAY, rows, mask.w, false);
}

}  // namespace maskprop
