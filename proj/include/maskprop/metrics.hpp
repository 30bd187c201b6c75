#pragma once

#include <string>
#include <vector>

#include "maskprop/image.hpp"

namespace maskprop {

// Intersection over union of two binary masks. Both empty -> 1, exactly one
// empty -> 0.
double region_similarity(const Mask& pred, const Mask& gt);

// Boundary F-measure: boundary pixels are foreground pixels with a
// background 4-neighbor or on the image edge; precision/recall match
// boundary pixels within tol_px (Euclidean). Both boundaries empty -> 1,
// exactly one empty -> 0.
double contour_accuracy(const Mask& pred, const Mask& gt, double tol_px);

// DAVIS convention: ceil(0.008 * image diagonal).
double default_boundary_tolerance(int h, int w);

// First-quartile mean minus fourth-quartile mean over per-frame values.
// Requires >= 4 frames.
double decay(const std::vector<double>& values);

struct ObjectReport {
  std::string sequence;
  std::string object;
  std::vector<double> j_frames, f_frames;
  double j_mean = 0, j_recall = 0, j_decay = 0;
  double f_mean = 0, f_recall = 0, f_decay = 0;
  double jf_mean = 0;
};

struct EvalReport {
  std::vector<ObjectReport> objects;
  double j_mean = 0, j_recall = 0, j_decay = 0;
  double f_mean = 0, f_recall = 0, f_decay = 0;
  double jf_mean = 0;

  std::string to_csv() const;
};

// Scores a prediction directory against ground truth, both in DAVIS layout
// (only the Annotations trees are read). The first frame is the given
// reference and is excluded unless include_first_frame. tol_px < 0 selects
// the default tolerance for the image size.
EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir,
                    bool include_first_frame = false, double tol_px = -1.0);

}  // namespace maskprop
