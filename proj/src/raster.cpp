#include "skelgen/raster.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"

namespace skelgen {

void RasterConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("raster", "canvas size must be positive");
  if (joint_radius < 1) throw ConfigError("raster", "joint radius must be >= 1");
  if (thickness < 1) throw ConfigError("raster", "line thickness must be >= 1");
  if (joint_color == background) throw ConfigError("raster", "joint color equals background");
}

Image::Image(int w, int h, Rgb fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill[0];
    rgb[i + 1] = fill[1];
    rgb[i + 2] = fill[2];
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[o], rgb[o + 1], rgb[o + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[o] = c[0];
  rgb[o + 1] = c[1];
  rgb[o + 2] = c[2];
}

int to_pixel(double u, int dim) { return static_cast<int>(std::lround(u * (dim - 1))); }

namespace {

void draw_line(Image& img, int x0, int y0, int x1, int y1, int thickness, Rgb c) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  const bool x_major = dx >= -dy;
  const int lo = -(thickness - 1) / 2;
  const int hi = lo + thickness - 1;
  int err = dx + dy;
  for (;;) {
    for (int o = lo; o <= hi; ++o) {
      if (x_major) {
        img.set(x0, y0 + o, c);
      } else {
        img.set(x0 + o, y0, c);
      }
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_disc(Image& img, int cx, int cy, int r, Rgb c) {
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, c);
    }
  }
}

}  // namespace

Image rasterize_frame(const PoseSequence& pose, Index frame, const SkeletonTopology& topology,
                      const RasterConfig& config) {
  config.validate();
  if (topology.joints() != pose.joints()) {
    throw DimensionError("raster", "topology has " + std::to_string(topology.joints()) +
                                       " joints but pose has " + std::to_string(pose.joints()));
  }
  Image img(config.width, config.height, config.background);
  const auto& colors = config.bone_colors.empty() ? topology.bone_colors : config.bone_colors;
  for (std::size_t b = 0; b < topology.bones.size(); ++b) {
    const auto [i, j] = topology.bones[b];
    if (!pose.visible(frame, i) || !pose.visible(frame, j)) continue;
    const Rgb c = b < colors.size() ? colors[b] : Rgb{255, 255, 255};
    draw_line(img, to_pixel(pose.x(frame, i), config.width), to_pixel(pose.y(frame, i), config.height),
              to_pixel(pose.x(frame, j), config.width), to_pixel(pose.y(frame, j), config.height),
              config.thickness, c);
  }
  for (Index j = 0; j < pose.joints(); ++j) {
    if (!pose.visible(frame, j)) continue;
    draw_disc(img, to_pixel(pose.x(frame, j), config.width), to_pixel(pose.y(frame, j), config.height),
              config.joint_radius, config.joint_color);
  }
  return img;
}

RasterVideo rasterize_video(const PoseSequence& pose, const SkeletonTopology& topology,
                            const RasterConfig& config, int threads) {
  config.validate();
  RasterVideo video;
  video.frames.resize(static_cast<std::size_t>(pose.frames()));
  parallel_for(
      video.frames.size(),
      [&](std::size_t t) { video.frames[t] = rasterize_frame(pose, static_cast<Index>(t), topology, config); },
      threads);
  video.manifest = {config.fps, pose.frames(), config.width, config.height};
  return video;
}

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("raster", "cannot write '" + path + "'");
  const std::string data = encode_ppm(image);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void write_video(const std::string& dir, const RasterVideo& video) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "frame_%05zu.ppm", t);
    write_ppm((std::filesystem::path(dir) / name).string(), video.frames[t]);
  }
  const nlohmann::json m = {{"fps", video.manifest.fps},
                            {"count", video.manifest.count},
                            {"width", video.manifest.width},
                            {"height", video.manifest.height}};
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw IoError("raster", "cannot write manifest in '" + dir + "'");
  out << m.dump(1) << '\n';
}

}  // namespace skelgen
