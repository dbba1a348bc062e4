#include "skelgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/rng.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

namespace {

constexpr const char* kModule = "metrics";

VecD clipped_eigenvalues(const VecD& values, const char* what) {
  const double top = std::max(1.0, values.size() ? values.maxCoeff() : 0.0);
  const double floor = -1e-8 * top;
  VecD out = values;
  for (Index i = 0; i < out.size(); ++i) {
    if (out(i) < floor) {
      std::ostringstream msg;
      msg << what << " is not PSD: eigenvalue " << out(i) << " below tolerance " << floor;
      throw NumericError(kModule, msg.str(), static_cast<int>(i));
    }
    out(i) = std::max(out(i), 0.0);
  }
  return out;
}

}  // namespace

MatD covariance(const MatD& x) {
  const Index n = x.rows();
  if (n < 2) throw InputError(kModule, "covariance needs at least 2 samples");
  const MatD centred = x.rowwise() - x.colwise().mean();
  return (centred.transpose() * centred) / static_cast<double>(n - 1);
}

MatD psd_sqrt(const MatD& sym, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatD> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericError(kModule, std::string(what) + ": eigensolver failed");
  const VecD root = clipped_eigenvalues(eig.eigenvalues(), what).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double fid(const MatD& real, const MatD& gen) {
  if (real.rows() < 2 || gen.rows() < 2) throw InputError(kModule, "fid needs at least 2 samples per set");
  if (real.cols() != gen.cols()) throw DimensionError(kModule, "fid sets differ in dimension");
  const RowVec<double> mu_r = real.colwise().mean();
  const RowVec<double> mu_g = gen.colwise().mean();
  const MatD s_r = covariance(real);
  const MatD s_g = covariance(gen);
  const MatD root_r = psd_sqrt(s_r, "real covariance");
  MatD inner = root_r * s_g * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<MatD> eig(inner, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError(kModule, "fid: eigensolver failed");
  const double cross = clipped_eigenvalues(eig.eigenvalues(), "covariance product").cwiseSqrt().sum();
  const double value = (mu_r - mu_g).squaredNorm() + s_r.trace() + s_g.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

std::vector<double> r_precision_curve(const MatD& text, const MatD& motion, int pool, int max_k,
                                      std::uint64_t seed) {
  const Index n = motion.rows();
  if (text.rows() != n || text.cols() != motion.cols()) {
    throw DimensionError(kModule, "text and motion embeddings must pair row for row");
  }
  if (pool < 1) throw InputError(kModule, "pool size must be >= 1");
  if (n < pool) {
    throw InputError(kModule, "r_precision needs at least " + std::to_string(pool) + " pairs, got " +
                                  std::to_string(n));
  }
  max_k = std::clamp(max_k, 1, pool);
  std::vector<int> rank(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    std::vector<Index> others;
    others.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
      if (j != static_cast<Index>(i)) others.push_back(j);
    }
    const auto row = motion.row(static_cast<Index>(i));
    const double truth = (text.row(static_cast<Index>(i)) - row).norm();
    int r = 1;
    for (int d = 0; d < pool - 1; ++d) {
      const std::size_t pick = d + uniform_index(rng, others.size() - static_cast<std::size_t>(d));
      std::swap(others[static_cast<std::size_t>(d)], others[pick]);
      if ((text.row(others[static_cast<std::size_t>(d)]) - row).norm() < truth) ++r;
    }
    rank[i] = r;
  });
  std::vector<double> curve(static_cast<std::size_t>(max_k), 0.0);
  for (int r : rank) {
    for (int k = r; k <= max_k; ++k) curve[static_cast<std::size_t>(k - 1)] += 1.0;
  }
  for (double& c : curve) c /= static_cast<double>(n);
  return curve;
}

RPrecision r_precision(const MatD& text, const MatD& motion, int pool, std::uint64_t seed) {
  const auto c = r_precision_curve(text, motion, pool, 3, seed);
  RPrecision out;
  out.top1 = c[0];
  out.top2 = c.size() > 1 ? c[1] : c.back();
  out.top3 = c.size() > 2 ? c[2] : c.back();
  return out;
}

double diversity(const MatD& gen, long pairs, std::uint64_t seed) {
  const Index n = gen.rows();
  if (n < 2) throw InputError(kModule, "diversity needs at least 2 samples");
  if (pairs < 1) throw InputError(kModule, "diversity needs at least 1 pair");
  Rng rng(derive_seed(seed, 0xd1e5));
  double sum = 0.0;
  for (long p = 0; p < pairs; ++p) {
    const auto i = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    auto j = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    sum += (gen.row(i) - gen.row(j)).norm();
  }
  return sum / static_cast<double>(pairs);
}

double mm_dist(const MatD& text, const MatD& motion) {
  if (motion.rows() < 1) throw InputError(kModule, "mm_dist needs at least 1 pair");
  if (text.rows() != motion.rows() || text.cols() != motion.cols()) {
    throw DimensionError(kModule, "text and motion embeddings must pair row for row");
  }
  return (text - motion).rowwise().norm().mean();
}

VecD resample_flat(const PoseSequence& pose, Index frames) {
  const Index t_in = pose.frames();
  const Index width = pose.coords().cols();
  VecD out(frames * width);
  for (Index f = 0; f < frames; ++f) {
    const double s = frames > 1 ? static_cast<double>(f) * static_cast<double>(t_in - 1) /
                                      static_cast<double>(frames - 1)
                                : 0.0;
    const Index lo = std::min(static_cast<Index>(std::floor(s)), t_in - 1);
    const Index hi = std::min(lo + 1, t_in - 1);
    const double w = s - static_cast<double>(lo);
    out.segment(f * width, width) =
        ((1.0 - w) * pose.coords().row(lo) + w * pose.coords().row(hi)).transpose();
  }
  return out;
}

RandomProjectionProvider::RandomProjectionProvider(Index joints, Index dim, std::uint64_t seed)
    : joints_(joints), dim_(dim), seed_(seed) {
  if (joints < 1 || dim < 1) throw InputError(kModule, "provider needs joints >= 1 and dim >= 1");
  const Index in = 2 * joints * kResampleFrames;
  Rng rng(derive_seed(seed, 0x9a01));
  projection_.resize(dim, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = normal01(rng) * scale * 8.0;
}

VecD RandomProjectionProvider::embed_motion(const PoseSequence& pose) const {
  if (pose.joints() != joints_) {
    throw DimensionError(kModule, "provider built for J=" + std::to_string(joints_) + ", pose has J=" +
                                      std::to_string(pose.joints()));
  }
  VecD flat = resample_flat(pose, kResampleFrames);
  flat.array() -= 0.5;
  return projection_ * flat;
}

VecD RandomProjectionProvider::embed_text(const std::string& prompt) const {
  const PromptTokenizer tokenizer;
  const auto words = tokenizer.words(prompt);
  VecD out = VecD::Zero(dim_);
  for (const auto& w : words) {
    Rng rng(derive_seed(seed_ ^ 0x7e47ULL, fnv1a64(w)));
    for (Index i = 0; i < dim_; ++i) out(i) += normal01(rng);
  }
  if (!words.empty()) out /= std::sqrt(static_cast<double>(words.size()));
  return out;
}

PrototypeProvider::PrototypeProvider(Index joints, const std::vector<ClipRecord>& reference,
                                     Index dim, std::uint64_t seed)
    : base_(joints, dim, seed) {
  std::map<std::string, std::pair<VecD, long>> acc;
  for (const auto& clip : reference) {
    auto [it, fresh] = acc.try_emplace(clip.prompt, VecD::Zero(dim), 0L);
    it->second.first += base_.embed_motion(clip.pose);
    ++it->second.second;
  }
  for (auto& [prompt, sum] : acc) centroids_[prompt] = sum.first / static_cast<double>(sum.second);
}

VecD PrototypeProvider::embed_text(const std::string& prompt) const {
  const auto it = centroids_.find(prompt);
  return it != centroids_.end() ? it->second : base_.embed_text(prompt);
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& id, Index joints,
                                                 const std::vector<ClipRecord>& reference) {
  if (id == "random64") return std::make_unique<RandomProjectionProvider>(joints, 64);
  if (id == "proto64") return std::make_unique<PrototypeProvider>(joints, reference, 64);
  throw ConfigError(kModule, "unknown provider '" + id + "' (expected random64 or proto64)");
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["provider"] = provider;
  j["fid"] = fid;
  j["rp@1"] = rp1;
  j["rp@2"] = rp2;
  j["rp@3"] = rp3;
  j["diversity"] = diversity;
  j["mm_dist"] = mm_dist;
  j["n_real"] = n_real;
  j["n_gen"] = n_gen;
  j["pool"] = pool;
  j["diversity_pairs"] = diversity_pairs;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.provider = j.at("provider").get<std::string>();
    r.fid = j.at("fid").get<double>();
    r.rp1 = j.at("rp@1").get<double>();
    r.rp2 = j.at("rp@2").get<double>();
    r.rp3 = j.at("rp@3").get<double>();
    r.diversity = j.at("diversity").get<double>();
    r.mm_dist = j.at("mm_dist").get<double>();
    r.n_real = j.at("n_real").get<long>();
    r.n_gen = j.at("n_gen").get<long>();
    r.pool = j.at("pool").get<int>();
    r.diversity_pairs = j.at("diversity_pairs").get<long>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, std::string("malformed metrics report: ") + e.what());
  }
}

namespace {

MatD embed_motions(const std::vector<ClipRecord>& clips, const EmbeddingProvider& provider) {
  MatD out(static_cast<Index>(clips.size()), provider.dim());
  parallel_for(clips.size(), [&](std::size_t i) {
    out.row(static_cast<Index>(i)) = provider.embed_motion(clips[i].pose).transpose();
  });
  return out;
}

}  // namespace

MetricsReport evaluate(const std::vector<ClipRecord>& real, const std::vector<ClipRecord>& gen,
                       const EmbeddingProvider& provider, const EvalOptions& options) {
  if (gen.size() < 2 || real.size() < 2) {
    throw InputError(kModule, "evaluation needs at least 2 real and 2 generated clips");
  }
  const MatD real_m = embed_motions(real, provider);
  const MatD gen_m = embed_motions(gen, provider);
  MatD gen_t(gen_m.rows(), gen_m.cols());
  for (std::size_t i = 0; i < gen.size(); ++i) {
    gen_t.row(static_cast<Index>(i)) = provider.embed_text(gen[i].prompt).transpose();
  }
  MetricsReport r;
  r.provider = provider.id();
  r.n_real = static_cast<long>(real.size());
  r.n_gen = static_cast<long>(gen.size());
  r.pool = std::min<int>(options.pool, static_cast<int>(gen.size()));
  r.diversity_pairs = options.diversity_pairs;
  r.fid = fid(real_m, gen_m);
  const auto rp = r_precision(gen_t, gen_m, r.pool, derive_seed(options.seed, 1));
  r.rp1 = rp.top1;
  r.rp2 = rp.top2;
  r.rp3 = rp.top3;
  r.diversity = diversity(gen_m, options.diversity_pairs, derive_seed(options.seed, 2));
  r.mm_dist = mm_dist(gen_t, gen_m);
  return r;
}

}  // namespace skelgen
