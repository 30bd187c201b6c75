#pragma once

#include <utility>

#include "maskprop/image.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

struct AugmentParams {
  bool hflip = false;
  double scale = 1.0;         // in [0.75, 1.25]
  double rotation_deg = 0.0;  // in [-30, 30]
};

// hflip ~ Bernoulli(0.5), scale ~ U[0.75, 1.25], rotation ~ U[-30, 30].
AugmentParams sample_augment(Rng& rng);

// Applies the same geometric transform to frame and mask and resamples to
// out_h x out_w: bilinear for the frame, nearest for the mask (re-binarized
// at 0.5). Zooming out pads by reflection; zooming in center-crops.
std::pair<Image, Mask> apply_augment(const Image& frame, const Mask& mask,
                                     const AugmentParams& params, int out_h, int out_w);

}  // namespace maskprop
