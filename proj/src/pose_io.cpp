#include "skelgen/pose_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skelgen/error.hpp"

namespace skelgen {

using nlohmann::json;

std::string to_json_line(const ClipRecord& record) {
  const auto& pose = record.pose;
  json frames = json::array();
  for (Index t = 0; t < pose.frames(); ++t) {
    json frame = json::array();
    for (Index j = 0; j < pose.joints(); ++j) frame.push_back({pose.x(t, j), pose.y(t, j)});
    frames.push_back(std::move(frame));
  }
  json out = {{"prompt", record.prompt}, {"fps", record.fps},       {"width", record.width},
              {"height", record.height}, {"joints", pose.joints()}, {"frames", std::move(frames)}};
  if (pose.visibility()) {
    json vis = json::array();
    for (Index t = 0; t < pose.frames(); ++t) {
      json row = json::array();
      for (Index j = 0; j < pose.joints(); ++j) row.push_back(static_cast<bool>((*pose.visibility())(t, j)));
      vis.push_back(std::move(row));
    }
    out["visibility"] = std::move(vis);
  }
  return out.dump();
}

ClipRecord parse_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError("pose", std::string("malformed pose record: ") + e.what());
  }
  try {
    const Index joints = j.at("joints").get<Index>();
    const auto& frames = j.at("frames");
    if (!frames.is_array() || frames.empty()) throw FormatError("pose", "record has no frames");
    PoseSequence::Coords c(static_cast<Index>(frames.size()), 2 * joints);
    for (Index t = 0; t < c.rows(); ++t) {
      const auto& frame = frames[static_cast<std::size_t>(t)];
      if (static_cast<Index>(frame.size()) != joints) {
        throw FormatError("pose", "frame " + std::to_string(t) + " has " +
                                      std::to_string(frame.size()) + " joints, expected " +
                                      std::to_string(joints));
      }
      for (Index k = 0; k < joints; ++k) {
        const auto& xy = frame[static_cast<std::size_t>(k)];
        c(t, 2 * k) = xy.at(0).get<double>();
        c(t, 2 * k + 1) = xy.at(1).get<double>();
      }
    }
    ClipRecord rec{j.at("prompt").get<std::string>(), j.value("fps", 30.0), j.value("width", 512),
                   j.value("height", 512), PoseSequence(c, joints)};
    if (j.contains("visibility")) {
      PoseSequence::Mask m(c.rows(), joints);
      const auto& vis = j["visibility"];
      for (Index t = 0; t < c.rows(); ++t)
        for (Index k = 0; k < joints; ++k)
          m(t, k) = vis.at(static_cast<std::size_t>(t)).at(static_cast<std::size_t>(k)).get<bool>();
      rec.pose = PoseSequence(std::move(c), joints, std::move(m));
    }
    return rec;
  } catch (const json::exception& e) {
    throw FormatError("pose", std::string("malformed pose record: ") + e.what());
  }
}

std::vector<ClipRecord> read_clips(std::istream& in) {
  std::vector<ClipRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_json_line(line));
    } catch (const Error& e) {
      throw FormatError("pose", "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ClipRecord> read_clips(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("pose", "cannot open pose file '" + path + "'");
  return read_clips(in);
}

void write_clips(std::ostream& out, const std::vector<ClipRecord>& clips) {
  for (const auto& c : clips) out << to_json_line(c) << '\n';
}

void write_clips(const std::string& path, const std::vector<ClipRecord>& clips) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pose", "cannot write pose file '" + path + "'");
  write_clips(out, clips);
}

std::string topology_to_json(const SkeletonTopology& topology) {
  json bones = json::array();
  for (const auto& [a, b] : topology.bones) bones.push_back({a, b});
  json colors = json::array();
  for (const auto& c : topology.bone_colors) colors.push_back({c[0], c[1], c[2]});
  json out = {{"joints", topology.joint_names}, {"bones", bones}};
  if (!topology.bone_colors.empty()) out["colors"] = colors;
  return out.dump(1);
}

SkeletonTopology topology_from_json(const std::string& text) {
  SkeletonTopology t;
  try {
    const json j = json::parse(text);
    t.joint_names = j.at("joints").get<std::vector<std::string>>();
    for (const auto& b : j.at("bones")) t.bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
    if (j.contains("colors")) {
      for (const auto& c : j["colors"]) t.bone_colors.push_back(c.get<Rgb>());
    } else {
      t.bone_colors.assign(t.bones.size(), Rgb{255, 255, 255});
    }
  } catch (const json::exception& e) {
    throw FormatError("pose", std::string("malformed topology: ") + e.what());
  }
  t.validate();
  return t;
}

SkeletonTopology read_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("pose", "cannot open topology file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return topology_from_json(ss.str());
}

void write_topology(const std::string& path, const SkeletonTopology& topology) {
  std::ofstream out(path);
  if (!out) throw IoError("pose", "cannot write topology file '" + path + "'");
  out << topology_to_json(topology) << '\n';
}

}  // namespace skelgen
