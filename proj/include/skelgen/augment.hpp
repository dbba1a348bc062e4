#pragma once

#include <cstdint>

#include "skelgen/pose.hpp"
#include "skelgen/rng.hpp"

namespace skelgen {

struct AugmentConfig {
  double sigma_pixels = 3.0;
  double width = 512.0;
  double height = 512.0;
  double dropout = 0.05;
  bool jitter_enabled = true;
  bool dropout_enabled = true;
  bool shift_enabled = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Adds N(0, (sigma/width)^2) to x and N(0, (sigma/height)^2) to y, then clamps.
PoseSequence joint_jitter(const PoseSequence& pose, double sigma_pixels, double width,
                          double height, Rng& rng);

// Zeroes each (frame, joint) with probability p and records it as invisible.
PoseSequence joint_dropout(const PoseSequence& pose, double p, Rng& rng);

// Shifts the whole sequence by delta frames, replicating the boundary frame.
// delta = +1: frame t takes old frame t-1 and frame 0 is kept.
PoseSequence temporal_shift_by(const PoseSequence& pose, int delta);

struct ShiftResult {
  PoseSequence pose;
  int delta = 0;  // 0 when T == 1 and nothing was done
};
// Draws delta uniformly from {-1, +1}. T == 1 returns the input unchanged.
ShiftResult temporal_shift(const PoseSequence& pose, Rng& rng);

// jitter -> dropout -> shift, each enabled stage seeded from its own stream.
PoseSequence compose(const PoseSequence& pose, const AugmentConfig& config);

// Sub-seed of each stage inside compose().
enum class AugmentStage : std::uint64_t { kJitter = 1, kDropout = 2, kShift = 3 };
std::uint64_t stage_seed(std::uint64_t seed, AugmentStage stage);

}  // namespace skelgen
