#include "maskprop/davis_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "maskprop/error.hpp"
#include "maskprop/png_io.hpp"
#include "maskprop/synth.hpp"

namespace fs = std::filesystem;

namespace maskprop {

namespace {

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d.png", i);
  return buf;
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void write_davis_layout(const VideoSequence& seq, const std::string& dir) {
  auto violations = validate_sequence(seq);
  if (!violations.empty())
    throw Error("write_davis_layout: invalid sequence: " + violations.front());
  const fs::path img_dir = fs::path(dir) / "JPEGImages" / seq.name;
  const fs::path ann_dir = fs::path(dir) / "Annotations" / seq.name;
  std::error_code ec;
  fs::create_directories(img_dir, ec);
  fs::create_directories(ann_dir, ec);
  if (!fs::is_directory(img_dir) || !fs::is_directory(ann_dir))
    throw IoError("cannot create layout directories under " + dir);
  for (int t = 0; t < seq.frame_count(); ++t) {
    write_png_rgb((img_dir / frame_name(t)).string(), seq.frames[t]);
    write_png_indexed((ann_dir / frame_name(t)).string(), merge_tracks_to_labels(seq, t));
  }
}

VideoSequence read_davis_layout(const std::string& dir, const std::string& name) {
  const fs::path img_dir = fs::path(dir) / "JPEGImages" / name;
  const fs::path ann_dir = fs::path(dir) / "Annotations" / name;
  auto frame_files = sorted_pngs(img_dir);
  auto ann_files = sorted_pngs(ann_dir);
  if (frame_files.empty()) throw IoError("missing frames: no PNG files in " + img_dir.string());
  if (frame_files.size() != ann_files.size())
    throw IoError("frame/annotation count mismatch for '" + name + "': " +
                  std::to_string(frame_files.size()) + " frames vs " +
                  std::to_string(ann_files.size()) + " annotations");

  VideoSequence seq;
  seq.name = name;
  std::vector<LabelMap> labels;
  for (std::size_t t = 0; t < frame_files.size(); ++t) {
    seq.frames.push_back(read_png_rgb(frame_files[t].string()));
    labels.push_back(read_png_indexed(ann_files[t].string()));
    if (labels.back().h != seq.frames.back().h || labels.back().w != seq.frames.back().w)
      throw IoError("frame/annotation size mismatch at index " + std::to_string(t));
  }

  std::set<int> present;
  for (const auto& map : labels)
    for (std::uint8_t l : map.labels)
      if (l != 0) present.insert(l);

  for (int label : present) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d", label);
    std::vector<Mask> track;
    for (const auto& map : labels) {
      Mask m = make_mask(map.h, map.w);
      for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x)
          if (map.at(y, x) == label) m.at(y, x) = 1.0;
      track.push_back(std::move(m));
    }
    seq.gt_tracks[buf] = std::move(track);
  }
  return seq;
}

std::vector<std::string> list_sequences(const std::string& dir) {
  std::vector<std::string> names;
  const fs::path root = fs::path(dir) / "JPEGImages";
  if (!fs::is_directory(root)) return names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace maskprop
