#pragma once

#include <vector>

#include "maskprop/image.hpp"
#include "maskprop/nn/tensor.hpp"

namespace maskprop::nn {

// Image buffers are planar CHW, so batching is a straight copy.
inline Tensor tensor_from_images(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw ShapeError("tensor_from_images: empty batch");
  const int h = imgs[0]->h, w = imgs[0]->w, c = imgs[0]->c;
  std::vector<double> data;
  data.reserve(imgs.size() * imgs[0]->numel());
  for (const Image* img : imgs) {
    if (img->h != h || img->w != w || img->c != c)
      throw ShapeError("tensor_from_images: mixed sizes in batch");
    data.insert(data.end(), img->v.begin(), img->v.end());
  }
  return Tensor::from({static_cast<int>(imgs.size()), c, h, w}, std::move(data));
}

inline Tensor tensor_from_image(const Image& img) { return tensor_from_images({&img}); }

inline Image image_from_tensor(const Tensor& t, int sample) {
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Image img(h, w, c);
  const std::size_t per = static_cast<std::size_t>(c) * h * w;
  std::copy(t.data().begin() + sample * per, t.data().begin() + (sample + 1) * per,
            img.v.begin());
  return img;
}

}  // namespace maskprop::nn
