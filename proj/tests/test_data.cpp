#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "maskprop/augment.hpp"
#include "maskprop/davis_io.hpp"
#include "maskprop/error.hpp"
#include "maskprop/metrics.hpp"
#include "maskprop/png_io.hpp"
#include "maskprop/synth.hpp"

namespace fs = std::filesystem;
using namespace maskprop;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("maskprop_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("generated square translates rigidly") {
  SynthSpec spec;
  spec.num_frames = 2;
  spec.height = spec.width = 32;
  spec.objects = {{ShapeKind::Square, 4, 0, 2, 16, 10}};
  spec.seed = 7;
  VideoSequence seq = generate_sequence(spec);
  REQUIRE(validate_sequence(seq).empty());
  const Mask& m0 = seq.gt_tracks.at("01")[0];
  const Mask& m1 = seq.gt_tracks.at("01")[1];
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double expect = x >= 2 ? m0.at(y, x - 2) : 0.0;
      CHECK(m1.at(y, x) == expect);
    }
}

TEST_CASE("generation is deterministic given the seed") {
  SynthSpec spec = random_spec(6, 32, 32, 2, 99);
  VideoSequence a = generate_sequence(spec, "a");
  VideoSequence b = generate_sequence(spec, "a");
  REQUIRE(a.frame_count() == b.frame_count());
  for (int t = 0; t < a.frame_count(); ++t) CHECK(a.frames[t].v == b.frames[t].v);
  for (const auto& [id, track] : a.gt_tracks)
    for (int t = 0; t < a.frame_count(); ++t) CHECK(track[t].v == b.gt_tracks.at(id)[t].v);
}

TEST_CASE("per-object masks are pairwise disjoint under occlusion") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    SynthSpec spec = random_spec(8, 32, 32, 3, seed);
    spec.allow_occlusion = true;
    VideoSequence seq = generate_sequence(spec);
    for (int t = 0; t < seq.frame_count(); ++t) {
      Mask claimed = make_mask(32, 32);
      for (const auto& [id, track] : seq.gt_tracks)
        for (int i = 0; i < 32 * 32; ++i) {
          if (track[t].v[i] != 0.0) {
            CHECK(claimed.v[i] == 0.0);
            claimed.v[i] = 1.0;
          }
        }
    }
  }
}

TEST_CASE("infeasible specs are rejected") {
  SynthSpec spec;
  spec.num_frames = 4;
  spec.height = spec.width = 16;
  spec.objects = {{ShapeKind::Square, 20, 0, 0, 8, 8}};
  CHECK_THROWS_AS(generate_sequence(spec), InfeasibleSpecError);
  spec.objects = {{ShapeKind::Square, 3, 0, 8, 8, 8}};  // center walks off canvas
  CHECK_THROWS_AS(generate_sequence(spec), InfeasibleSpecError);
}

TEST_CASE("davis layout round-trips") {
  auto dir = temp_dir("davis_rt");
  SynthSpec spec = random_spec(3, 32, 32, 2, 5);
  VideoSequence seq = generate_sequence(spec, "clip");
  write_davis_layout(seq, dir.string());

  CHECK(fs::exists(dir / "JPEGImages" / "clip" / "00002.png"));
  CHECK(fs::exists(dir / "Annotations" / "clip" / "00002.png"));

  VideoSequence back = read_davis_layout(dir.string(), "clip");
  CHECK(validate_sequence(back).empty());
  REQUIRE(back.frame_count() == seq.frame_count());
  REQUIRE(back.gt_tracks.size() == seq.gt_tracks.size());
  // masks exactly equal; frames equal up to 8-bit quantization
  for (const auto& [id, track] : seq.gt_tracks)
    for (int t = 0; t < seq.frame_count(); ++t) CHECK(track[t].v == back.gt_tracks.at(id)[t].v);
  for (int t = 0; t < seq.frame_count(); ++t)
    for (std::size_t i = 0; i < seq.frames[t].v.size(); ++i)
      CHECK(std::abs(seq.frames[t].v[i] - back.frames[t].v[i]) <= 0.5 / 255.0 + 1e-12);

  // write -> read -> write is byte-identical
  auto dir2 = temp_dir("davis_rt2");
  write_davis_layout(back, dir2.string());
  for (int t = 0; t < seq.frame_count(); ++t) {
    char name[16];
    std::snprintf(name, sizeof name, "%05d.png", t);
    CHECK(file_bytes(dir / "Annotations" / "clip" / name) ==
          file_bytes(dir2 / "Annotations" / "clip" / name));
    CHECK(file_bytes(dir / "JPEGImages" / "clip" / name) ==
          file_bytes(dir2 / "JPEGImages" / "clip" / name));
  }
}

TEST_CASE("read_davis_layout reports missing and mismatched files") {
  auto dir = temp_dir("davis_err");
  CHECK_THROWS_AS(read_davis_layout(dir.string(), "none"), IoError);

  SynthSpec spec = random_spec(3, 32, 32, 1, 6);
  VideoSequence seq = generate_sequence(spec, "clip");
  write_davis_layout(seq, dir.string());
  fs::remove(dir / "Annotations" / "clip" / "00002.png");
  CHECK_THROWS_AS(read_davis_layout(dir.string(), "clip"), IoError);

  // malformed png
  std::ofstream bad(dir / "Annotations" / "clip" / "00002.png", std::ios::binary);
  bad << "not a png";
  bad.close();
  CHECK_THROWS_AS(read_davis_layout(dir.string(), "clip"), IoError);
}

TEST_CASE("write_davis_layout fails on unwritable directories") {
  SynthSpec spec = random_spec(2, 16, 16, 1, 3);
  VideoSequence seq = generate_sequence(spec, "clip");
  CHECK_THROWS_AS(write_davis_layout(seq, "/proc/definitely_not_writable"), IoError);
}

TEST_CASE("sample_augment is reproducible and in range") {
  Rng a(11), b(11);
  for (int i = 0; i < 100; ++i) {
    AugmentParams pa = sample_augment(a), pb = sample_augment(b);
    CHECK(pa.hflip == pb.hflip);
    CHECK(pa.scale == pb.scale);
    CHECK(pa.rotation_deg == pb.rotation_deg);
  }
}

TEST_CASE("sample_augment statistics: scale mean near 1, full range respected") {
  Rng rng(12);
  double acc = 0.0;
  for (int i = 0; i < 10000; ++i) {
    AugmentParams p = sample_augment(rng);
    CHECK(p.scale >= 0.75);
    CHECK(p.scale <= 1.25);
    CHECK(p.rotation_deg >= -30.0);
    CHECK(p.rotation_deg <= 30.0);
    acc += p.scale;
  }
  CHECK(std::abs(acc / 10000.0 - 1.0) < 0.01);
}

TEST_CASE("identity augmentation is exact") {
  SynthSpec spec = random_spec(2, 32, 32, 1, 8);
  VideoSequence seq = generate_sequence(spec);
  AugmentParams identity;
  auto [frame, mask] = apply_augment(seq.frames[0], seq.gt_tracks.at("01")[0], identity, 32, 32);
  CHECK(frame.v == seq.frames[0].v);
  CHECK(mask.v == seq.gt_tracks.at("01")[0].v);
}

TEST_CASE("horizontal flip is an involution") {
  SynthSpec spec = random_spec(2, 32, 32, 1, 9);
  VideoSequence seq = generate_sequence(spec);
  AugmentParams flip;
  flip.hflip = true;
  auto [f1, m1] = apply_augment(seq.frames[0], seq.gt_tracks.at("01")[0], flip, 32, 32);
  auto [f2, m2] = apply_augment(f1, m1, flip, 32, 32);
  CHECK(f2.v == seq.frames[0].v);
  CHECK(m2.v == seq.gt_tracks.at("01")[0].v);
}

TEST_CASE("rotating +30 then -30 nearly restores a centered disk") {
  Mask disk = make_mask(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if ((y - 31.5) * (y - 31.5) + (x - 31.5) * (x - 31.5) <= 14 * 14) disk.at(y, x) = 1.0;
  Image frame(64, 64, 3, 0.5);
  AugmentParams rot;
  rot.rotation_deg = 30.0;
  auto [f1, m1] = apply_augment(frame, disk, rot, 64, 64);
  rot.rotation_deg = -30.0;
  auto [f2, m2] = apply_augment(f1, m1, rot, 64, 64);
  CHECK(region_similarity(m2, disk) >= 0.95);
}

TEST_CASE("augmentation preserves mask binariness and frame range") {
  SynthSpec spec = random_spec(2, 32, 32, 2, 10);
  VideoSequence seq = generate_sequence(spec);
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    AugmentParams p = sample_augment(rng);
    auto [frame, mask] = apply_augment(seq.frames[0], seq.gt_tracks.at("01")[0], p, 48, 48);
    CHECK(is_binary(mask));
    for (double v : frame.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
