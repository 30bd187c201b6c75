#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskprop/core.hpp"
#include "maskprop/png_io.hpp"

namespace maskprop {

enum class ShapeKind { Square, Circle };
enum class BackgroundMode { Solid, Textured };

struct ObjectSpec {
  ShapeKind kind = ShapeKind::Square;
  int half_size = 4;               // square half-side / circle radius, px
  int vy = 0, vx = 0;              // px per frame
  int start_y = -1, start_x = -1;  // center at frame 0; -1 = draw from seed
};

// Desk-scale stand-in for a real corpus: rigid shapes on a static background
// moving with constant velocity. Depth order is the object index (lower
// index occludes).
struct SynthSpec {
  int num_frames = 24;
  int height = 64, width = 64;
  std::vector<ObjectSpec> objects;
  bool allow_occlusion = true;
  BackgroundMode background = BackgroundMode::Textured;
  std::uint64_t seed = 0;
};

// Deterministic given spec.seed. gt masks cover exactly the visible part of
// each rendered shape. Throws InfeasibleSpecError when a shape cannot fit or
// a center leaves the canvas.
VideoSequence generate_sequence(const SynthSpec& spec, const std::string& name = "synth");

// Randomized feasible spec for corpus generation.
SynthSpec random_spec(int num_frames, int height, int width, int num_objects,
                      std::uint64_t seed);

// Merge per-object binary masks into a label map; lower object index wins.
// Object order is the lexicographic order of track ids mapped to labels 1..N.
LabelMap merge_tracks_to_labels(const VideoSequence& seq, int frame_index);

}  // namespace maskprop
