#include "skelgen/pose.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skelgen/error.hpp"

namespace skelgen {

namespace {

void check_coords(const PoseSequence::Coords& coords, Index joints) {
  if (joints < 1) throw DomainError("pose", "joint count must be >= 1");
  if (coords.rows() < 1) throw DomainError("pose", "pose needs at least one frame");
  if (coords.cols() != 2 * joints) {
    throw DomainError("pose", "coordinate rows must hold 2*J values, got " +
                                  std::to_string(coords.cols()) + " for J=" +
                                  std::to_string(joints));
  }
  for (Index t = 0; t < coords.rows(); ++t) {
    for (Index c = 0; c < coords.cols(); ++c) {
      const double u = coords(t, c);
      if (!(u >= 0.0 && u <= 1.0)) {
        throw DomainError("pose", "coordinate outside [0,1] at frame " + std::to_string(t) +
                                      ", joint " + std::to_string(c / 2));
      }
    }
  }
}

}  // namespace

PoseSequence::PoseSequence(Coords coords, Index joints)
    : coords_(std::move(coords)), joints_(joints) {
  check_coords(coords_, joints_);
}

PoseSequence::PoseSequence(Coords coords, Index joints, Mask visibility)
    : coords_(std::move(coords)), joints_(joints), visibility_(std::move(visibility)) {
  check_coords(coords_, joints_);
  if (visibility_->rows() != coords_.rows() || visibility_->cols() != joints_) {
    throw DomainError("pose", "visibility mask must be T x J");
  }
}

PoseSequence PoseSequence::constant(Index frames, Index joints, double x, double y) {
  Coords c(frames, 2 * joints);
  for (Index j = 0; j < joints; ++j) {
    c.col(2 * j).setConstant(x);
    c.col(2 * j + 1).setConstant(y);
  }
  return PoseSequence(std::move(c), joints);
}

Vocabulary::Vocabulary(int bins) : bins_(bins) {
  if (bins < 2) throw DomainError("pose", "bin count K must be >= 2");
}

std::vector<std::int32_t> TokenStream::body() const {
  if (!framed) return tokens;
  if (tokens.size() < 2 || tokens.front() != Vocabulary::kBos ||
      tokens.back() != Vocabulary::kEos) {
    throw TokenError("pose", "framed stream must start with BOS and end with EOS");
  }
  return {tokens.begin() + 1, tokens.end() - 1};
}

NormalizedPose normalize_pose(const PoseSequence::Coords& raw, Index joints, double width,
                              double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw DomainError("pose", "frame width and height must be positive");
  }
  if (raw.cols() != 2 * joints) throw DomainError("pose", "raw rows must hold 2*J values");
  PoseSequence::Coords out(raw.rows(), raw.cols());
  std::size_t clamped = 0;
  for (Index t = 0; t < raw.rows(); ++t) {
    for (Index c = 0; c < raw.cols(); ++c) {
      const double dim = (c % 2 == 0) ? width : height;
      double u = raw(t, c) / dim;
      if (!std::isfinite(u)) throw DomainError("pose", "non-finite raw coordinate");
      if (u < 0.0 || u > 1.0) {
        u = std::clamp(u, 0.0, 1.0);
        ++clamped;
      }
      out(t, c) = u;
    }
  }
  return {PoseSequence(std::move(out), joints), clamped};
}

int quantize(double u, int bins) {
  if (bins < 2) throw DomainError("pose", "bin count K must be >= 2");
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("pose", "quantize: u outside [0,1]");
  return static_cast<int>(std::ceil(u * static_cast<double>(bins - 1)));
}

std::int32_t shift_token(int bin, const Vocabulary& vocab) {
  if (bin < 0 || bin >= vocab.bins()) {
    throw DomainError("pose", "bin " + std::to_string(bin) + " outside [0, K)");
  }
  return static_cast<std::int32_t>(bin) + Vocabulary::kOffset;
}

double detokenize_coord(std::int32_t token, const Vocabulary& vocab) {
  if (!vocab.is_body(token)) {
    throw DomainError("pose", "token " + std::to_string(token) + " is not a body token");
  }
  const double scale = static_cast<double>(vocab.bins() - 1);
  const double bin = static_cast<double>(token - Vocabulary::kOffset);
  double u = bin / scale;
  while (u > 0.0 && u * scale > bin) u = std::nextafter(u, 0.0);
  return u;
}

TokenStream serialize(const PoseSequence& pose, const Vocabulary& vocab, bool framed) {
  TokenStream out;
  out.framed = framed;
  const auto& c = pose.coords();
  out.tokens.reserve(static_cast<std::size_t>(c.size()) + (framed ? 2 : 0));
  if (framed) out.tokens.push_back(Vocabulary::kBos);
  for (Index t = 0; t < c.rows(); ++t) {
    for (Index k = 0; k < c.cols(); ++k) {
      out.tokens.push_back(shift_token(quantize(c(t, k), vocab.bins()), vocab));
    }
  }
  if (framed) out.tokens.push_back(Vocabulary::kEos);
  return out;
}

PoseSequence deserialize(const TokenStream& stream, Index joints, const Vocabulary& vocab) {
  if (joints < 1) throw DomainError("pose", "joint count must be >= 1");
  const auto body = stream.body();
  const Index per_frame = frame_tokens(joints);
  const Index n = static_cast<Index>(body.size());
  if (n == 0 || n % per_frame != 0) {
    const Index frame = n / per_frame;
    throw StructureError("pose",
                         "body length " + std::to_string(n) + " is not a positive multiple of " +
                             std::to_string(per_frame) + "; frame " + std::to_string(frame) +
                             " is incomplete",
                         frame);
  }
  PoseSequence::Coords c(n / per_frame, per_frame);
  for (Index i = 0; i < n; ++i) {
    const auto tok = body[static_cast<std::size_t>(i)];
    if (!vocab.is_body(tok)) {
      throw TokenError("pose", "non-body token " + std::to_string(tok) + " at body position " +
                                   std::to_string(i));
    }
    c(i / per_frame, i % per_frame) = detokenize_coord(tok, vocab);
  }
  return PoseSequence(std::move(c), joints);
}

}  // namespace skelgen
