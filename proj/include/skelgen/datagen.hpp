#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "skelgen/pose_io.hpp"
#include "skelgen/rng.hpp"

namespace skelgen {

// Per-clip draw of a family's free parameters. Motion is periodic in the
// phase variable with period 1; a clip covers `cycles` periods.
struct MotionParams {
  double amplitude = 0.0;
  double cycles = 1.0;
  double phase = 0.0;
  double rotation = 0.0;  // global body angle, radians
  double scale = 0.3;     // normalized units per body unit
  double cx = 0.5, cy = 0.5;
  double style = 0.0;     // family-specific secondary parameter in [-1, 1]
};

// Joint angles (one per joint, relative to the parent bone) plus root offset.
struct Articulation {
  std::vector<double> angles;
  double root_x = 0.0, root_y = 0.0;
};

class MotionFamily {
 public:
  virtual ~MotionFamily() = default;
  virtual std::string name() const = 0;
  virtual MotionParams sample(Rng& rng) const = 0;
  // Articulation at phase u; periodic in u with period 1.
  virtual Articulation articulate(const MotionParams& params, double u) const = 0;

  std::string prompt() const { return "a person performs a " + name(); }
  // Normalized (x, y) per joint at phase u, before clamping.
  std::vector<double> evaluate(const MotionParams& params, double u) const;
};

// arm swing, cartwheel, jump, kick, static pose.
const std::vector<std::unique_ptr<MotionFamily>>& motion_families();
const MotionFamily& family_by_name(const std::string& name);

// 2D forward kinematics on the whole-body skeleton: world (x, y) per joint in
// body units, y up.
std::vector<double> forward_kinematics(const Articulation& pose);

// T frames at phases phase + cycles * t / T, mapped to image coordinates and
// clamped into [0, 1].
PoseSequence render_clip(const MotionFamily& family, const MotionParams& params, Index frames);

// Clip i belongs to family i mod F and draws its parameters from seed stream i.
std::vector<ClipRecord> generate_dataset(std::size_t n, Index t_min, Index t_max,
                                         std::uint64_t seed);

struct Split {
  std::vector<ClipRecord> train, test;
};
// Seeded sequence-level split; n_train = round(fraction * n).
Split split(const std::vector<ClipRecord>& corpus, double train_fraction, std::uint64_t seed);
// Index form of split(); train then test indices, each ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double train_fraction, std::uint64_t seed);

}  // namespace skelgen
