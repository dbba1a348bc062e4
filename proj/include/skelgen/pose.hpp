#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "skelgen/types.hpp"

namespace skelgen {

// T x J x 2 normalized image-plane coordinates, stored as T rows of
// interleaved (x, y) pairs: row t = [x_0, y_0, x_1, y_1, ...]. This is also
// the serialization order, so a row is one frame of tokens.
class PoseSequence {
 public:
  using Coords = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  // Throws DomainError unless T >= 1, J >= 1, cols == 2J and every
  // coordinate lies in [0, 1].
  PoseSequence(Coords coords, Index joints);
  PoseSequence(Coords coords, Index joints, Mask visibility);

  // All joints at the same point.
  static PoseSequence constant(Index frames, Index joints, double x, double y);

  Index frames() const { return coords_.rows(); }
  Index joints() const { return joints_; }
  double x(Index t, Index j) const { return coords_(t, 2 * j); }
  double y(Index t, Index j) const { return coords_(t, 2 * j + 1); }
  const Coords& coords() const { return coords_; }

  const std::optional<Mask>& visibility() const { return visibility_; }
  bool visible(Index t, Index j) const { return !visibility_ || (*visibility_)(t, j); }

 private:
  Coords coords_;
  Index joints_;
  std::optional<Mask> visibility_;
};

// Token id layout: four specials then K body tokens.
struct Vocabulary {
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kReserved = 3;
  static constexpr std::int32_t kOffset = 4;

  explicit Vocabulary(int bins);

  int bins() const { return bins_; }
  int size() const { return kOffset + bins_; }
  std::int32_t first_body() const { return kOffset; }
  std::int32_t last_body() const { return kOffset + bins_ - 1; }
  bool is_body(std::int32_t token) const { return token >= kOffset && token < kOffset + bins_; }

 private:
  int bins_;
};

struct TokenStream {
  std::vector<std::int32_t> tokens;
  bool framed = false;
  // Set by the sampler when generation hit its length cap without EOS.
  bool truncated = false;

  // Body tokens only (framing stripped). Requires a well-formed frame.
  std::vector<std::int32_t> body() const;
};

struct NormalizedPose {
  PoseSequence pose;
  // Number of raw coordinates that fell outside the frame and were clamped.
  std::size_t clamped = 0;
};

// raw: T rows of interleaved pixel (x, y) pairs.
NormalizedPose normalize_pose(const PoseSequence::Coords& raw, Index joints, double width,
                              double height);

// Ceiling quantization ceil(u * (K - 1)). Note bin 0 covers only u == 0.
int quantize(double u, int bins);
std::int32_t shift_token(int bin, const Vocabulary& vocab);
// Inverse of shift_token then quantize: bin / (K - 1), nudged down by at most
// an ulp so that quantize(detokenize_coord(t)) recovers the bin exactly.
double detokenize_coord(std::int32_t token, const Vocabulary& vocab);

TokenStream serialize(const PoseSequence& pose, const Vocabulary& vocab, bool framed);
// Framed or unframed input. Throws StructureError / TokenError.
PoseSequence deserialize(const TokenStream& stream, Index joints, const Vocabulary& vocab);

// Tokens per frame: 2J.
inline Index frame_tokens(Index joints) { return 2 * joints; }

}  // namespace skelgen
