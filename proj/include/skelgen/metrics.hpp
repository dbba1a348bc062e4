#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "skelgen/pose_io.hpp"
#include "skelgen/types.hpp"

namespace skelgen {

// Rows are samples.
// |mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r^1/2 S_g S_r^1/2)^1/2) with unbiased
// covariances. Eigenvalues down to -1e-8 * max(1, lambda_max) are clipped to
// zero; anything more negative throws NumericError listing the eigenvalue.
double fid(const MatD& real, const MatD& gen);

// Returns the symmetric PSD square root; same clipping rule as fid().
MatD psd_sqrt(const MatD& sym, const char* what = "matrix");

MatD covariance(const MatD& samples);

struct RPrecision {
  double top1 = 0.0, top2 = 0.0, top3 = 0.0;
};

// Row i of `text` is the caption of motion row i. For each motion the true
// text competes against pool - 1 distinct random distractors; ranks use
// Euclidean distance and ties favour the true text. Throws InputError when
// there are fewer than `pool` pairs.
RPrecision r_precision(const MatD& text, const MatD& motion, int pool, std::uint64_t seed);
// Fraction with the true text within the top k, k in [1, pool].
std::vector<double> r_precision_curve(const MatD& text, const MatD& motion, int pool, int max_k,
                                      std::uint64_t seed);

// Mean distance over `pairs` seeded pairs (i, j), i != j.
double diversity(const MatD& gen, long pairs, std::uint64_t seed);

// Mean distance between row i of text and row i of motion.
double mm_dist(const MatD& text, const MatD& motion);

// Maps motions and prompts into one d_e-dimensional space.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual Index dim() const = 0;
  virtual VecD embed_motion(const PoseSequence& pose) const = 0;
  virtual VecD embed_text(const std::string& prompt) const = 0;
};

// Seeded Gaussian projection of time-resampled, centred pose sequences; text
// is a normalized sum of per-word Gaussian vectors keyed by the word hash.
// The two halves share no structure, so alignment is at chance.
class RandomProjectionProvider : public EmbeddingProvider {
 public:
  static constexpr Index kResampleFrames = 16;

  RandomProjectionProvider(Index joints, Index dim = 64, std::uint64_t seed = 0x5eed);
  std::string id() const override { return "random" + std::to_string(dim_); }
  Index dim() const override { return dim_; }
  VecD embed_motion(const PoseSequence& pose) const override;
  VecD embed_text(const std::string& prompt) const override;

 private:
  Index joints_;
  Index dim_;
  std::uint64_t seed_;
  MatD projection_;  // dim x (2 J kResampleFrames)
};

// Motion side of the random provider; a prompt embeds to the centroid of the
// reference motions carrying it (falls back to the random text map).
class PrototypeProvider : public EmbeddingProvider {
 public:
  PrototypeProvider(Index joints, const std::vector<ClipRecord>& reference, Index dim = 64,
                    std::uint64_t seed = 0x5eed);
  std::string id() const override { return "proto" + std::to_string(base_.dim()); }
  Index dim() const override { return base_.dim(); }
  VecD embed_motion(const PoseSequence& pose) const override { return base_.embed_motion(pose); }
  VecD embed_text(const std::string& prompt) const override;

 private:
  RandomProjectionProvider base_;
  std::map<std::string, VecD> centroids_;
};

// "random64" or "proto64". proto needs the reference corpus.
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& id, Index joints,
                                                 const std::vector<ClipRecord>& reference);

// Linear resampling to `frames` frames, flattened frame-major.
VecD resample_flat(const PoseSequence& pose, Index frames);

struct MetricsReport {
  std::string provider;
  double fid = 0.0;
  double rp1 = 0.0, rp2 = 0.0, rp3 = 0.0;
  double diversity = 0.0;
  double mm_dist = 0.0;
  long n_real = 0;
  long n_gen = 0;
  int pool = 0;
  long diversity_pairs = 0;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

struct EvalOptions {
  int pool = 32;
  long diversity_pairs = 300;
  std::uint64_t seed = 0;
};

// FID of real vs generated motions; R-precision and MM-Dist over generated
// motions paired with their prompts; diversity over generated motions. The
// pool shrinks to the number of generated clips when there are fewer.
MetricsReport evaluate(const std::vector<ClipRecord>& real, const std::vector<ClipRecord>& gen,
                       const EmbeddingProvider& provider, const EvalOptions& options);

}  // namespace skelgen
