#include "skelgen/topology.hpp"

#include <algorithm>
#include <numeric>

#include "skelgen/error.hpp"

namespace skelgen {

namespace {

struct Layout {
  SkeletonTopology topology;
  std::vector<int> parents;
};

Rgb side_color(const std::string& name) {
  if (name.rfind("left_", 0) == 0) return {64, 128, 255};
  if (name.rfind("right_", 0) == 0) return {255, 96, 64};
  return {96, 224, 96};
}

Layout build_wholebody62() {
  Layout out;
  auto& names = out.topology.joint_names;
  auto& parents = out.parents;
  auto add = [&](std::string name, int parent) {
    names.push_back(std::move(name));
    parents.push_back(parent);
    return static_cast<int>(names.size()) - 1;
  };

  const int pelvis = add("pelvis", -1);
  const int l_hip = add("left_hip", pelvis);
  const int r_hip = add("right_hip", pelvis);
  const int spine1 = add("spine1", pelvis);
  const int l_knee = add("left_knee", l_hip);
  const int r_knee = add("right_knee", r_hip);
  const int spine2 = add("spine2", spine1);
  const int l_ankle = add("left_ankle", l_knee);
  const int r_ankle = add("right_ankle", r_knee);
  const int spine3 = add("spine3", spine2);
  add("left_foot", l_ankle);
  add("right_foot", r_ankle);
  const int neck = add("neck", spine3);
  const int l_collar = add("left_collar", spine3);
  const int r_collar = add("right_collar", spine3);
  add("head", neck);
  const int l_shoulder = add("left_shoulder", l_collar);
  const int r_shoulder = add("right_shoulder", r_collar);
  const int l_elbow = add("left_elbow", l_shoulder);
  const int r_elbow = add("right_elbow", r_shoulder);
  const int l_wrist = add("left_wrist", l_elbow);
  const int r_wrist = add("right_wrist", r_elbow);

  static const char* kFingers[] = {"thumb", "index", "middle", "ring", "pinky"};
  static const Rgb kFingerColors[] = {
      {255, 200, 0}, {200, 255, 0}, {0, 255, 200}, {0, 200, 255}, {200, 0, 255}};
  auto& colors = out.topology.bone_colors;
  auto& bones = out.topology.bones;
  for (int j = 1; j < static_cast<int>(names.size()); ++j) {
    bones.emplace_back(parents[j], j);
    colors.push_back(side_color(names[j]));
  }
  for (const auto& [side, wrist] : {std::pair{std::string("left"), l_wrist},
                                    std::pair{std::string("right"), r_wrist}}) {
    for (int f = 0; f < 5; ++f) {
      int parent = wrist;
      for (int k = 1; k <= 4; ++k) {
        const std::string suffix = k == 4 ? "_tip" : std::to_string(k);
        const int j = add(side + "_" + kFingers[f] + suffix, parent);
        bones.emplace_back(parent, j);
        colors.push_back(kFingerColors[f]);
        parent = j;
      }
    }
  }
  return out;
}

const Layout& layout62() {
  static const Layout layout = build_wholebody62();
  return layout;
}

}  // namespace

void SkeletonTopology::validate() const {
  const int n = static_cast<int>(joint_names.size());
  if (n < 1) throw DomainError("pose", "topology has no joints");
  if (!bone_colors.empty() && bone_colors.size() != bones.size()) {
    throw DomainError("pose", "bone color table must match bone count");
  }
  std::vector<int> root(static_cast<std::size_t>(n));
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int a) {
    while (root[a] != a) a = root[a] = root[root[a]];
    return a;
  };
  std::vector<bool> touched(static_cast<std::size_t>(n), false);
  for (const auto& [a, b] : bones) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw DomainError("pose", "bone index out of range for " + std::to_string(n) + " joints");
    }
    touched[a] = touched[b] = true;
    root[find(a)] = find(b);
  }
  int component = -1;
  for (int j = 0; j < n; ++j) {
    if (!touched[j]) continue;
    const int r = find(j);
    if (component < 0) component = r;
    if (r != component) throw DomainError("pose", "bone graph is not connected");
  }
}

int SkeletonTopology::index_of(const std::string& name) const {
  const auto it = std::find(joint_names.begin(), joint_names.end(), name);
  return it == joint_names.end() ? -1 : static_cast<int>(it - joint_names.begin());
}

const SkeletonTopology& wholebody62() { return layout62().topology; }
const std::vector<int>& wholebody62_parents() { return layout62().parents; }

}  // namespace skelgen
