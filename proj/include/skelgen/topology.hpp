#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skelgen/types.hpp"

namespace skelgen {

using Rgb = std::array<std::uint8_t, 3>;

// Fixed joint ordering shared by the serializer, the rasterizer and the data
// generator. `parents[j]` is -1 for the root.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<std::pair<int, int>> bones;
  std::vector<Rgb> bone_colors;

  Index joints() const { return static_cast<Index>(joint_names.size()); }
  // Throws DomainError when an edge is out of range or the bone graph does not
  // connect every joint it touches.
  void validate() const;
  int index_of(const std::string& name) const;
};

// 62-joint whole-body layout: 22 body joints followed by 20 joints per hand
// (15 finger joints plus 5 fingertips), left hand first.
const SkeletonTopology& wholebody62();

// Parent index per joint for wholebody62 (tree order, parent < child).
const std::vector<int>& wholebody62_parents();

}  // namespace skelgen
