#include "maskprop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "maskprop/error.hpp"
#include "maskprop/png_io.hpp"

namespace fs = std::filesystem;

namespace maskprop {

double region_similarity(const Mask& pred, const Mask& gt) {
  if (!pred.same_size(gt)) throw ShapeError("region_similarity: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] != 0.0, g = gt.v[i] != 0.0;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::vector<std::pair<int, int>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (m.at(y, x) == 0.0) continue;
      const bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      const bool bg_neighbor = (y > 0 && m.at(y - 1, x) == 0.0) ||
                               (y < m.h - 1 && m.at(y + 1, x) == 0.0) ||
                               (x > 0 && m.at(y, x - 1) == 0.0) ||
                               (x < m.w - 1 && m.at(y, x + 1) == 0.0);
      if (edge || bg_neighbor) out.emplace_back(y, x);
    }
  return out;
}

// Bitmap of all pixels within tol of any boundary pixel (disk dilation).
std::vector<char> dilate(const std::vector<std::pair<int, int>>& pts, int h, int w, double tol) {
  std::vector<char> hit(static_cast<std::size_t>(h) * w, 0);
  const int r = static_cast<int>(std::floor(tol));
  const double tol2 = tol * tol;
  for (auto [y, x] : pts)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        if (dy * dy + dx * dx > tol2) continue;
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w)
          hit[static_cast<std::size_t>(yy) * w + xx] = 1;
      }
  return hit;
}

}  // namespace

double contour_accuracy(const Mask& pred, const Mask& gt, double tol_px) {
  if (!pred.same_size(gt)) throw ShapeError("contour_accuracy: size mismatch");
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const auto gt_hit = dilate(gb, gt.h, gt.w, tol_px);
  const auto pred_hit = dilate(pb, pred.h, pred.w, tol_px);
  std::size_t p_match = 0;
  for (auto [y, x] : pb) p_match += gt_hit[static_cast<std::size_t>(y) * gt.w + x];
  std::size_t g_match = 0;
  for (auto [y, x] : gb) g_match += pred_hit[static_cast<std::size_t>(y) * pred.w + x];
  const double precision = static_cast<double>(p_match) / static_cast<double>(pb.size());
  const double recall = static_cast<double>(g_match) / static_cast<double>(gb.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double default_boundary_tolerance(int h, int w) {
  return std::ceil(0.008 * std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w));
}

double decay(const std::vector<double>& values) {
  const int t = static_cast<int>(values.size());
  if (t < 4) throw Error("decay: need at least 4 frames, got " + std::to_string(t));
  auto bin_mean = [&](int bin) {
    const int lo = bin * t / 4, hi = (bin + 1) * t / 4;
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) acc += values[i];
    return acc / static_cast<double>(hi - lo);
  };
  return bin_mean(0) - bin_mean(3);
}

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

Mask label_to_mask(const LabelMap& map, int label) {
  Mask m = make_mask(map.h, map.w);
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x)
      if (map.at(y, x) == label) m.at(y, x) = 1.0;
  return m;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double recall_of(const std::vector<double>& v) {
  std::size_t n = 0;
  for (double x : v) n += x > 0.5;
  return v.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(v.size());
}

}  // namespace

EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir,
                    bool include_first_frame, double tol_px) {
  const fs::path gt_root = fs::path(gt_dir) / "Annotations";
  const fs::path pred_root = fs::path(pred_dir) / "Annotations";
  if (!fs::is_directory(gt_root)) throw IoError("no Annotations directory under " + gt_dir);
  std::vector<std::string> sequences;
  for (const auto& e : fs::directory_iterator(gt_root))
    if (e.is_directory()) sequences.push_back(e.path().filename().string());
  std::sort(sequences.begin(), sequences.end());
  if (sequences.empty()) throw IoError("no sequences under " + gt_root.string());

  std::vector<std::string> missing;
  for (const auto& name : sequences)
    if (!fs::is_directory(pred_root / name)) missing.push_back(name);
  if (!missing.empty()) {
    std::string msg = "prediction layout is missing sequences:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  EvalReport report;
  for (const auto& name : sequences) {
    auto gt_files = sorted_pngs(gt_root / name);
    auto pred_files = sorted_pngs(pred_root / name);
    if (gt_files.size() != pred_files.size())
      throw IoError("frame count mismatch for '" + name + "': gt " +
                    std::to_string(gt_files.size()) + " vs pred " +
                    std::to_string(pred_files.size()));
    if (gt_files.empty()) throw IoError("no annotations for sequence " + name);

    std::vector<LabelMap> gt_maps, pred_maps;
    for (std::size_t i = 0; i < gt_files.size(); ++i) {
      gt_maps.push_back(read_png_indexed(gt_files[i].string()));
      pred_maps.push_back(read_png_indexed(pred_files[i].string()));
      if (gt_maps.back().h != pred_maps.back().h || gt_maps.back().w != pred_maps.back().w)
        throw IoError("annotation size mismatch in '" + name + "' frame " + std::to_string(i));
    }
    const double tol =
        tol_px >= 0 ? tol_px : default_boundary_tolerance(gt_maps[0].h, gt_maps[0].w);

    std::set<int> labels;
    for (const auto& map : gt_maps)
      for (std::uint8_t l : map.labels)
        if (l != 0) labels.insert(l);

    for (int label : labels) {
      ObjectReport obj;
      obj.sequence = name;
      char buf[8];
      std::snprintf(buf, sizeof buf, "%02d", label);
      obj.object = buf;
      const std::size_t start = include_first_frame ? 0 : 1;
      for (std::size_t t = start; t < gt_maps.size(); ++t) {
        Mask gm = label_to_mask(gt_maps[t], label);
        Mask pm = label_to_mask(pred_maps[t], label);
        obj.j_frames.push_back(region_similarity(pm, gm));
        obj.f_frames.push_back(contour_accuracy(pm, gm, tol));
      }
      obj.j_mean = mean_of(obj.j_frames);
      obj.f_mean = mean_of(obj.f_frames);
      obj.j_recall = recall_of(obj.j_frames);
      obj.f_recall = recall_of(obj.f_frames);
      obj.j_decay = static_cast<int>(obj.j_frames.size()) >= 4 ? decay(obj.j_frames) : 0.0;
      obj.f_decay = static_cast<int>(obj.f_frames.size()) >= 4 ? decay(obj.f_frames) : 0.0;
      obj.jf_mean = 0.5 * (obj.j_mean + obj.f_mean);
      report.objects.push_back(std::move(obj));
    }
  }
  if (report.objects.empty()) throw IoError("evaluation found no objects");

  std::vector<double> jm, fm, jr, fr, jd, fd;
  for (const auto& o : report.objects) {
    jm.push_back(o.j_mean);
    fm.push_back(o.f_mean);
    jr.push_back(o.j_recall);
    fr.push_back(o.f_recall);
    jd.push_back(o.j_decay);
    fd.push_back(o.f_decay);
  }
  report.j_mean = mean_of(jm);
  report.f_mean = mean_of(fm);
  report.j_recall = mean_of(jr);
  report.f_recall = mean_of(fr);
  report.j_decay = mean_of(jd);
  report.f_decay = mean_of(fd);
  report.jf_mean = 0.5 * (report.j_mean + report.f_mean);
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sequence,object,J_mean,J_recall,J_decay,F_mean,F_recall,F_decay,JF_mean\n";
  for (const auto& o : objects)
    os << o.sequence << ',' << o.object << ',' << o.j_mean << ',' << o.j_recall << ','
       << o.j_decay << ',' << o.f_mean << ',' << o.f_recall << ',' << o.f_decay << ','
       << o.jf_mean << '\n';
  os << "ALL,ALL," << j_mean << ',' << j_recall << ',' << j_decay << ',' << f_mean << ','
     << f_recall << ',' << f_decay << ',' << jf_mean << '\n';
  return os.str();
}

}  // namespace maskprop
