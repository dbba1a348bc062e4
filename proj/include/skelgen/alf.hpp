#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skelgen/layers.hpp"
#include "skelgen/types.hpp"

// Adaptive layer fusion over a stack of multi-layer patch features:
// per-layer FiLM, per-patch attention across layers queried from layer 0,
// and a LayerNorm + two-layer MLP projection head. Plus the low-rank adapter.
namespace skelgen::alf {

// N patches x L layers x d channels, stored as L matrices of N x d.
template <class S>
struct FeatureStack {
  std::vector<Mat<S>> layers;

  Index patches() const { return layers.empty() ? 0 : layers[0].rows(); }
  Index depth() const { return static_cast<Index>(layers.size()); }
  Index channels() const { return layers.empty() ? 0 : layers[0].cols(); }

  static FeatureStack random(Index patches, Index depth, Index channels, std::uint64_t seed);
};

template <class S>
struct FusionParams {
  Mat<S> beta, delta;  // L x d
  Mat<S> wq, wk, wv, wo;  // d x d
  Mat<S> bq, bk, bv, bo;  // 1 x d
  Mat<S> ln_g, ln_b;      // 1 x d
  Mat<S> w1, b1;          // d x 2d, 1 x 2d
  Mat<S> w2, b2;          // 2d x out, 1 x out

  static FusionParams zeros(Index depth, Index channels, Index out);
  static FusionParams random(Index depth, Index channels, Index out, std::uint64_t seed);

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("film.beta"), self.beta);
    f(std::string("film.delta"), self.delta);
    f(std::string("agg.wq"), self.wq);
    f(std::string("agg.wk"), self.wk);
    f(std::string("agg.wv"), self.wv);
    f(std::string("agg.wo"), self.wo);
    f(std::string("agg.bq"), self.bq);
    f(std::string("agg.bk"), self.bk);
    f(std::string("agg.bv"), self.bv);
    f(std::string("agg.bo"), self.bo);
    f(std::string("proj.ln.gamma"), self.ln_g);
    f(std::string("proj.ln.beta"), self.ln_b);
    f(std::string("proj.w1"), self.w1);
    f(std::string("proj.b1"), self.b1);
    f(std::string("proj.w2"), self.w2);
    f(std::string("proj.b2"), self.b2);
  }
  template <class F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }
};

template <class S>
struct FilmCache {
  std::vector<LayerNormCache<S>> norm;
};

// P'[l] = Norm(P[l]) * (1 + beta_l) + delta_l, Norm = affine-free per-token LN.
template <class S>
FeatureStack<S> film(const FeatureStack<S>& stack, const Mat<S>& beta, const Mat<S>& delta,
                     FilmCache<S>* cache = nullptr);
template <class S>
FeatureStack<S> film_backward(const FeatureStack<S>& dout, const FilmCache<S>& cache,
                              const Mat<S>& beta, Mat<S>& dbeta, Mat<S>& ddelta);

template <class S>
struct AggregateCache {
  Mat<S> q;
  std::vector<Mat<S>> k, v;
  Mat<S> weights;  // N x L attention over layers
  Mat<S> ctx;
};

// Per patch: single-head attention over its L layer entries with the query
// taken from layer 0. Patches never attend to each other.
template <class S>
Mat<S> aggregate(const FeatureStack<S>& modulated, const FusionParams<S>& params,
                 AggregateCache<S>* cache = nullptr);
template <class S>
FeatureStack<S> aggregate_backward(const Mat<S>& dout, const FeatureStack<S>& modulated,
                                   const AggregateCache<S>& cache, const FusionParams<S>& params,
                                   FusionParams<S>& grads);

template <class S>
struct ProjectCache {
  LayerNormCache<S> ln;
  Mat<S> z, u, h;
};

// a = GELU(LN(p) W1 + b1) W2 + b2.
template <class S>
Mat<S> project(const Mat<S>& aggregated, const FusionParams<S>& params,
               ProjectCache<S>* cache = nullptr);
template <class S>
Mat<S> project_backward(const Mat<S>& dout, const ProjectCache<S>& cache,
                        const FusionParams<S>& params, FusionParams<S>& grads);

// film -> aggregate -> project.
template <class S>
Mat<S> fuse(const FeatureStack<S>& stack, const FusionParams<S>& params);

template <class S>
struct LoraAdapter {
  Mat<S> a;  // r x d_in
  Mat<S> b;  // d_out x r
  S alpha = S(1);

  Index rank() const { return a.rows(); }
  void validate() const;
};

// W x + (alpha / r) * B (A x), without forming B A. Throws DimensionError.
template <class S>
Vec<S> lora_apply(const Mat<S>& w, const LoraAdapter<S>& adapter, const Vec<S>& x);

enum class CheckedOp { kFilm, kAggregate, kProject, kLora, kFusionChain };

std::string to_string(CheckedOp op);
CheckedOp parse_checked_op(const std::string& name);

struct GradCheckSetup {
  Index patches = 4;
  Index depth = 3;
  Index channels = 8;
  Index out = 6;
  Index d_in = 7;
  Index d_out = 5;
  Index rank = 2;
  double step = 1e-5;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string param;  // parameter holding the worst entry
  Index entry = -1;
  Index checked = 0;
  double floor = 0.0;
  bool passed = false;
};

// Hook applied to each analytic gradient before comparison (negative tests).
using GradientTamper = std::function<void(const std::string& name, MatD& grad)>;

// Central differences against the analytic backward for every parameter of
// the op on a seeded random problem. Objective: sum(R .* out) + 0.5 |out|^2.
// Relative error is |g - n| / max(|g|, |n|, floor), floor = 1e-6 max(1, |f|).
GradCheckReport grad_check(CheckedOp op, const GradCheckSetup& setup, double tolerance,
                           const GradientTamper& tamper = {});

}  // namespace skelgen::alf
