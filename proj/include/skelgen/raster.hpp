#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelgen/pose.hpp"
#include "skelgen/topology.hpp"

namespace skelgen {

struct RasterConfig {
  int width = 512;
  int height = 512;
  int joint_radius = 3;
  int thickness = 2;
  double fps = 30.0;
  Rgb background{0, 0, 0};
  Rgb joint_color{255, 255, 255};
  // Overrides the topology's bone colors when non-empty.
  std::vector<Rgb> bone_colors;

  void validate() const;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int w, int h, Rgb fill);
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool operator==(const Image&) const = default;
};

// pixel = round(u * (dim - 1)).
int to_pixel(double u, int dim);

// Bones first (integer Bresenham, thickness stamped across the minor axis),
// then joints as filled discs. Invisible joints and their bones are skipped.
Image rasterize_frame(const PoseSequence& pose, Index frame, const SkeletonTopology& topology,
                      const RasterConfig& config);

struct VideoManifest {
  double fps = 30.0;
  Index count = 0;
  int width = 0;
  int height = 0;
};

struct RasterVideo {
  std::vector<Image> frames;
  VideoManifest manifest;
};

RasterVideo rasterize_video(const PoseSequence& pose, const SkeletonTopology& topology,
                            const RasterConfig& config, int threads = 0);

// Binary PPM (P6).
std::string encode_ppm(const Image& image);
void write_ppm(const std::string& path, const Image& image);
// frame_00000.ppm ... plus manifest.json {fps, count, width, height}.
void write_video(const std::string& dir, const RasterVideo& video);

}  // namespace skelgen
