#include "maskprop/synth.hpp"

#include <algorithm>
#include <cmath>

#include "maskprop/error.hpp"
#include "maskprop/rng.hpp"

namespace maskprop {

namespace {

bool shape_covers(const ObjectSpec& obj, int cy, int cx, int y, int x) {
  const int h = obj.half_size;
  if (obj.kind == ShapeKind::Square)
    return y >= cy - h && y < cy + h && x >= cx - h && x < cx + h;
  const int dy = y - cy, dx = x - cx;
  return dy * dy + dx * dx <= h * h;
}

struct Placement {
  std::vector<int> cy0, cx0;  // centers at frame 0
};

bool center_path_ok(const SynthSpec& spec, const ObjectSpec& obj, int cy, int cx) {
  for (int t = 0; t < spec.num_frames; ++t) {
    const int y = cy + obj.vy * t, x = cx + obj.vx * t;
    if (y < 0 || y >= spec.height || x < 0 || x >= spec.width) return false;
  }
  return true;
}

bool fully_inside_path(const SynthSpec& spec, const ObjectSpec& obj, int cy, int cx) {
  const int h = obj.half_size;
  for (int t = 0; t < spec.num_frames; ++t) {
    const int y = cy + obj.vy * t, x = cx + obj.vx * t;
    if (y - h < 0 || y + h > spec.height || x - h < 0 || x + h > spec.width) return false;
  }
  return true;
}

bool boxes_overlap(const ObjectSpec& a, int ay, int ax, const ObjectSpec& b, int by, int bx) {
  const int ra = a.half_size, rb = b.half_size;
  return std::abs(ay - by) <= ra + rb && std::abs(ax - bx) <= ra + rb;
}

}  // namespace

VideoSequence generate_sequence(const SynthSpec& spec, const std::string& name) {
  if (spec.num_frames < 2) throw InfeasibleSpecError("num_frames must be >= 2");
  if (spec.objects.empty()) throw InfeasibleSpecError("at least one object required");
  Rng rng(spec.seed);

  for (const auto& obj : spec.objects) {
    if (obj.half_size < 1) throw InfeasibleSpecError("object size must be >= 1 px");
    if (2 * obj.half_size > std::min(spec.height, spec.width))
      throw InfeasibleSpecError("shape does not fit the canvas");
  }

  // Place objects. Explicit starts are validated; randomized starts keep the
  // whole shape inside for every frame and, without occlusion, keep bounding
  // boxes disjoint across the clip.
  Placement place;
  place.cy0.resize(spec.objects.size());
  place.cx0.resize(spec.objects.size());
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& obj = spec.objects[i];
    if (obj.start_y >= 0 && obj.start_x >= 0) {
      if (!center_path_ok(spec, obj, obj.start_y, obj.start_x))
        throw InfeasibleSpecError("object center leaves the canvas");
      place.cy0[i] = obj.start_y;
      place.cx0[i] = obj.start_x;
      continue;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const int cy = static_cast<int>(rng.below(spec.height));
      const int cx = static_cast<int>(rng.below(spec.width));
      if (!fully_inside_path(spec, obj, cy, cx)) continue;
      if (!spec.allow_occlusion) {
        bool clash = false;
        for (std::size_t j = 0; j < i && !clash; ++j)
          for (int t = 0; t < spec.num_frames && !clash; ++t)
            clash = boxes_overlap(obj, cy + obj.vy * t, cx + obj.vx * t, spec.objects[j],
                                  place.cy0[j] + spec.objects[j].vy * t,
                                  place.cx0[j] + spec.objects[j].vx * t);
        if (clash) continue;
      }
      place.cy0[i] = cy;
      place.cx0[i] = cx;
      placed = true;
    }
    if (!placed) throw InfeasibleSpecError("could not place object " + std::to_string(i));
  }

  // Background, static across frames.
  Image background(spec.height, spec.width, 3);
  if (spec.background == BackgroundMode::Solid) {
    const double r = rng.uniform(0.05, 0.55), g = rng.uniform(0.05, 0.55),
                 b = rng.uniform(0.05, 0.55);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        background.at(y, x, 0) = r;
        background.at(y, x, 1) = g;
        background.at(y, x, 2) = b;
      }
  } else {
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) background.at(y, x, ch) = rng.uniform(0.0, 0.5);
  }

  // Object colors, pulled away from the background mean for contrast.
  double bg_mean = 0.0;
  for (double v : background.v) bg_mean += v;
  bg_mean /= static_cast<double>(background.v.size());
  std::vector<std::array<double, 3>> colors(spec.objects.size());
  for (auto& col : colors) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      col = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
      const double mean = (col[0] + col[1] + col[2]) / 3.0;
      if (std::abs(mean - bg_mean) > 0.25) break;
    }
  }

  VideoSequence seq;
  seq.name = name;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02zu", i + 1);
    ids.emplace_back(buf);
    seq.gt_tracks[ids.back()] = {};
  }

  for (int t = 0; t < spec.num_frames; ++t) {
    Image frame = background;
    std::vector<Mask> visible(spec.objects.size(), make_mask(spec.height, spec.width));
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        // Lowest covering index owns the pixel.
        for (std::size_t i = 0; i < spec.objects.size(); ++i) {
          const ObjectSpec& obj = spec.objects[i];
          const int cy = place.cy0[i] + obj.vy * t;
          const int cx = place.cx0[i] + obj.vx * t;
          if (shape_covers(obj, cy, cx, y, x)) {
            visible[i].at(y, x) = 1.0;
            frame.at(y, x, 0) = colors[i][0];
            frame.at(y, x, 1) = colors[i][1];
            frame.at(y, x, 2) = colors[i][2];
            break;
          }
        }
      }
    seq.frames.push_back(std::move(frame));
    for (std::size_t i = 0; i < spec.objects.size(); ++i)
      seq.gt_tracks[ids[i]].push_back(std::move(visible[i]));
  }
  return seq;
}

SynthSpec random_spec(int num_frames, int height, int width, int num_objects,
                      std::uint64_t seed) {
  Rng rng(seed ^ 0x5eedULL);
  SynthSpec spec;
  spec.num_frames = num_frames;
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  spec.background = rng.bernoulli(0.5) ? BackgroundMode::Textured : BackgroundMode::Solid;
  const int min_half = std::max(3, height / 12);
  const int max_half = std::max(min_half + 1, height / 6);
  for (int i = 0; i < num_objects; ++i) {
    ObjectSpec obj;
    obj.kind = rng.bernoulli(0.5) ? ShapeKind::Square : ShapeKind::Circle;
    obj.half_size = min_half + static_cast<int>(rng.below(max_half - min_half + 1));
    // Velocity magnitude bounded so the whole path can stay on canvas.
    const int vmax = std::max(1, (height - 2 * obj.half_size - 2) / (2 * num_frames));
    const int cap = std::min(2, vmax);
    do {
      obj.vy = static_cast<int>(rng.below(2 * cap + 1)) - cap;
      obj.vx = static_cast<int>(rng.below(2 * cap + 1)) - cap;
    } while (obj.vy == 0 && obj.vx == 0);
    spec.objects.push_back(obj);
  }
  return spec;
}

LabelMap merge_tracks_to_labels(const VideoSequence& seq, int frame_index) {
  LabelMap map;
  map.h = seq.height();
  map.w = seq.width();
  map.labels.assign(static_cast<std::size_t>(map.h) * map.w, 0);
  int label = 1;
  for (const auto& [id, track] : seq.gt_tracks) {  // std::map: id order is stable
    const Mask& m = track[frame_index];
    for (int y = 0; y < map.h; ++y)
      for (int x = 0; x < map.w; ++x)
        if (m.at(y, x) != 0.0 && map.labels[static_cast<std::size_t>(y) * map.w + x] == 0)
          map.labels[static_cast<std::size_t>(y) * map.w + x] = static_cast<std::uint8_t>(label);
    ++label;
  }
  return map;
}

}  // namespace maskprop
