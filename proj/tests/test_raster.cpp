#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/raster.hpp"

using namespace skelgen;

namespace {

SkeletonTopology single_joint() {
  SkeletonTopology t;
  t.joint_names = {"only"};
  return t;
}

SkeletonTopology chain(int n) {
  SkeletonTopology t;
  for (int i = 0; i < n; ++i) t.joint_names.push_back("j" + std::to_string(i));
  for (int i = 1; i < n; ++i) {
    t.bones.push_back({i - 1, i});
    t.bone_colors.push_back({200, 50, 50});
  }
  return t;
}

std::size_t non_background(const Image& img, Rgb bg) {
  std::size_t n = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) n += img.at(x, y) != bg;
  }
  return n;
}

}  // namespace

TEST_SUITE("raster") {

TEST_CASE("pixel mapping rounds u * (dim - 1)") {
  CHECK(to_pixel(0.0, 100) == 0);
  CHECK(to_pixel(1.0, 100) == 99);
  CHECK(to_pixel(0.5, 100) == 50);
  CHECK(to_pixel(0.5, 101) == 50);
}

TEST_CASE("invisible joints leave a pure background") {
  const auto& topo = wholebody62();
  PoseSequence::Mask hidden = PoseSequence::Mask::Constant(1, 62, false);
  const PoseSequence p(PoseSequence::constant(1, 62, 0.5, 0.5).coords(), 62, hidden);
  RasterConfig cfg;
  cfg.width = cfg.height = 64;
  const auto img = rasterize_frame(p, 0, topo, cfg);
  CHECK(img == Image(64, 64, cfg.background));
}

TEST_CASE("single joint disc matches a brute-force oracle") {
  RasterConfig cfg;
  cfg.width = cfg.height = 100;
  cfg.joint_radius = 2;
  const auto img = rasterize_frame(PoseSequence::constant(1, 1, 0.5, 0.5), 0, single_joint(), cfg);
  CHECK(img.at(50, 50) == cfg.joint_color);
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) {
      const bool inside = (x - 50) * (x - 50) + (y - 50) * (y - 50) <= 4;
      REQUIRE(img.at(x, y) == (inside ? cfg.joint_color : cfg.background));
    }
  }
}

TEST_CASE("bones are drawn with the stamped thickness") {
  RasterConfig cfg;
  cfg.width = cfg.height = 50;
  cfg.joint_radius = 1;
  cfg.thickness = 3;
  PoseSequence::Coords c(1, 4);
  c << 0.2, 0.5, 0.8, 0.5;
  const auto img = rasterize_frame(PoseSequence(c, 2), 0, chain(2), cfg);
  const Rgb bone{200, 50, 50};
  const int y = to_pixel(0.5, 50);
  for (int x = to_pixel(0.2, 50) + 2; x <= to_pixel(0.8, 50) - 2; ++x) {
    CHECK(img.at(x, y - 1) == bone);
    CHECK(img.at(x, y) == bone);
    CHECK(img.at(x, y + 1) == bone);
    CHECK(img.at(x, y - 2) == cfg.background);
    CHECK(img.at(x, y + 2) == cfg.background);
  }
}

TEST_CASE("a hidden endpoint removes its bones") {
  RasterConfig cfg;
  cfg.width = cfg.height = 40;
  PoseSequence::Coords c(1, 6);
  c << 0.1, 0.1, 0.5, 0.5, 0.9, 0.9;
  PoseSequence::Mask m(1, 3);
  m << true, false, true;
  const auto img = rasterize_frame(PoseSequence(c, 3, m), 0, chain(3), cfg);
  const auto full = rasterize_frame(PoseSequence(c, 3), 0, chain(3), cfg);
  CHECK(img.at(20, 20) == cfg.background);
  CHECK(non_background(img, cfg.background) < non_background(full, cfg.background));
}

TEST_CASE("video frames are deterministic across threads") {
  const auto clip = generate_dataset(2, 6, 6, 4)[1].pose;
  RasterConfig cfg;
  cfg.width = cfg.height = 96;
  const auto a = rasterize_video(clip, wholebody62(), cfg, 1);
  const auto b = rasterize_video(clip, wholebody62(), cfg, 4);
  REQUIRE(a.frames.size() == 6);
  CHECK(a.manifest.count == 6);
  for (std::size_t i = 0; i < a.frames.size(); ++i) CHECK(encode_ppm(a.frames[i]) == encode_ppm(b.frames[i]));
}

TEST_CASE("static pose gives identical frames and a moving joint advances") {
  RasterConfig cfg;
  cfg.width = cfg.height = 64;
  const auto still = rasterize_video(PoseSequence::constant(4, 1, 0.3, 0.6), single_joint(), cfg);
  for (const auto& f : still.frames) CHECK(f == still.frames[0]);

  PoseSequence::Coords c(8, 2);
  for (Index t = 0; t < 8; ++t) c.row(t) << 0.1 + 0.1 * static_cast<double>(t), 0.5;
  const auto moving = rasterize_video(PoseSequence(c, 1), single_joint(), cfg);
  double prev = -1;
  for (const auto& f : moving.frames) {
    double sx = 0, n = 0;
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        if (f.at(x, y) == cfg.joint_color) {
          sx += x;
          ++n;
        }
      }
    }
    REQUIRE(n > 0);
    CHECK(sx / n > prev);
    prev = sx / n;
  }
}

TEST_CASE("PPM encoding and video files") {
  Image img(3, 2, {1, 2, 3});
  const auto ppm = encode_ppm(img);
  CHECK(ppm.rfind("P6\n3 2\n255\n", 0) == 0);
  CHECK(ppm.size() == 11 + 18);

  RasterConfig cfg;
  cfg.width = cfg.height = 16;
  cfg.fps = 12.5;
  const auto video = rasterize_video(PoseSequence::constant(3, 1, 0.5, 0.5), single_joint(), cfg);
  const auto dir = std::filesystem::temp_directory_path() / "skelgen_test_video";
  std::filesystem::remove_all(dir);
  write_video(dir.string(), video);
  CHECK(std::filesystem::exists(dir / "frame_00002.ppm"));
  std::ifstream m(dir / "manifest.json");
  const auto j = nlohmann::json::parse(m);
  CHECK(j.at("count") == 3);
  CHECK(j.at("fps") == 12.5);
  CHECK(j.at("width") == 16);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
  RasterConfig cfg;
  cfg.joint_radius = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.width = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(rasterize_frame(PoseSequence::constant(1, 2, 0.5, 0.5), 0, single_joint(), RasterConfig{}),
                  DimensionError);
}

}  // TEST_SUITE
