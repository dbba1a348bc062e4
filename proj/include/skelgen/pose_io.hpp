#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "skelgen/pose.hpp"
#include "skelgen/topology.hpp"

namespace skelgen {

// One line of a pose dataset file.
struct ClipRecord {
  std::string prompt;
  double fps = 30.0;
  int width = 512;
  int height = 512;
  PoseSequence pose;
};

// JSON-lines: {"prompt", "fps", "width", "height", "joints", "frames"} with
// frames as [[[x, y] x J] x T]. An optional "visibility" T x J boolean array
// is written when the pose carries a mask.
std::string to_json_line(const ClipRecord& record);
ClipRecord parse_json_line(const std::string& line);

std::vector<ClipRecord> read_clips(std::istream& in);
std::vector<ClipRecord> read_clips(const std::string& path);
void write_clips(std::ostream& out, const std::vector<ClipRecord>& clips);
void write_clips(const std::string& path, const std::vector<ClipRecord>& clips);

// {"joints": [names], "bones": [[i, j], ...], "colors": [[r, g, b], ...]}.
std::string topology_to_json(const SkeletonTopology& topology);
SkeletonTopology topology_from_json(const std::string& text);
SkeletonTopology read_topology(const std::string& path);
void write_topology(const std::string& path, const SkeletonTopology& topology);

}  // namespace skelgen
