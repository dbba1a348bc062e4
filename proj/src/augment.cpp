#include "skelgen/augment.hpp"

#include <algorithm>

#include "skelgen/error.hpp"

namespace skelgen {

void AugmentConfig::validate() const {
  if (!(sigma_pixels >= 0.0)) throw ConfigError("augment", "sigma must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw ConfigError("augment", "dropout must lie in [0,1]");
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("augment", "frame size must be positive");
}

PoseSequence joint_jitter(const PoseSequence& pose, double sigma_pixels, double width,
                          double height, Rng& rng) {
  if (!(width > 0.0 && height > 0.0)) throw DomainError("augment", "frame size must be positive");
  if (sigma_pixels == 0.0) return pose;
  const double sx = sigma_pixels / width;
  const double sy = sigma_pixels / height;
  PoseSequence::Coords c = pose.coords();
  for (Index t = 0; t < c.rows(); ++t) {
    for (Index j = 0; j < pose.joints(); ++j) {
      c(t, 2 * j) = std::clamp(c(t, 2 * j) + sx * normal01(rng), 0.0, 1.0);
      c(t, 2 * j + 1) = std::clamp(c(t, 2 * j + 1) + sy * normal01(rng), 0.0, 1.0);
    }
  }
  if (pose.visibility()) return PoseSequence(std::move(c), pose.joints(), *pose.visibility());
  return PoseSequence(std::move(c), pose.joints());
}

PoseSequence joint_dropout(const PoseSequence& pose, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("augment", "dropout probability outside [0,1]");
  PoseSequence::Coords c = pose.coords();
  PoseSequence::Mask vis = pose.visibility() ? *pose.visibility()
                                             : PoseSequence::Mask::Constant(c.rows(), pose.joints(), true);
  for (Index t = 0; t < c.rows(); ++t) {
    for (Index j = 0; j < pose.joints(); ++j) {
      if (uniform01(rng) < p) {
        c(t, 2 * j) = 0.0;
        c(t, 2 * j + 1) = 0.0;
        vis(t, j) = false;
      }
    }
  }
  return PoseSequence(std::move(c), pose.joints(), std::move(vis));
}

PoseSequence temporal_shift_by(const PoseSequence& pose, int delta) {
  const Index n = pose.frames();
  auto src = [&](Index t) { return std::clamp<Index>(t - delta, 0, n - 1); };
  PoseSequence::Coords c(n, pose.coords().cols());
  for (Index t = 0; t < n; ++t) c.row(t) = pose.coords().row(src(t));
  if (!pose.visibility()) return PoseSequence(std::move(c), pose.joints());
  PoseSequence::Mask vis(n, pose.joints());
  for (Index t = 0; t < n; ++t) vis.row(t) = pose.visibility()->row(src(t));
  return PoseSequence(std::move(c), pose.joints(), std::move(vis));
}

ShiftResult temporal_shift(const PoseSequence& pose, Rng& rng) {
  // A single frame has nothing to shift; callers may log this.
  if (pose.frames() < 2) return {pose, 0};
  const int delta = (rng() >> 63) ? 1 : -1;
  return {temporal_shift_by(pose, delta), delta};
}

std::uint64_t stage_seed(std::uint64_t seed, AugmentStage stage) {
  return derive_seed(seed, static_cast<std::uint64_t>(stage));
}

PoseSequence compose(const PoseSequence& pose, const AugmentConfig& config) {
  config.validate();
  PoseSequence out = pose;
  if (config.jitter_enabled) {
    Rng rng(stage_seed(config.seed, AugmentStage::kJitter));
    out = joint_jitter(out, config.sigma_pixels, config.width, config.height, rng);
  }
  if (config.dropout_enabled) {
    Rng rng(stage_seed(config.seed, AugmentStage::kDropout));
    out = joint_dropout(out, config.dropout, rng);
  }
  if (config.shift_enabled) {
    Rng rng(stage_seed(config.seed, AugmentStage::kShift));
    out = temporal_shift(out, rng).pose;
  }
  return out;
}

}  // namespace skelgen
