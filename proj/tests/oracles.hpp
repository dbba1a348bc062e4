#pragma once

// Reference implementations used only by tests. They favour obviousness over
// speed and share no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "skelgen/model.hpp"
#include "skelgen/rng.hpp"

namespace skelgen::oracle {

inline double ln_row(const std::vector<double>& x, std::size_t i, double eps, double* mean_out,
                     double* rstd_out) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  *mean_out = mean;
  *rstd_out = 1.0 / std::sqrt(var + eps);
  return (x[i] - mean) * *rstd_out;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const MatD& g, const MatD& b,
                                      double eps) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double m, r;
    y[i] = ln_row(x, i, eps, &m, &r);
    if (g.size() > 0) y[i] = y[i] * g(0, static_cast<Index>(i)) + b(0, static_cast<Index>(i));
  }
  return y;
}

inline std::vector<double> affine(const std::vector<double>& x, const MatD& w, const MatD& b) {
  std::vector<double> y(static_cast<std::size_t>(w.cols()), 0.0);
  for (Index o = 0; o < w.cols(); ++o) {
    double s = b.size() > 0 ? b(0, o) : 0.0;
    for (Index i = 0; i < w.rows(); ++i) s += x[static_cast<std::size_t>(i)] * w(i, o);
    y[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

// Loop-level decoder forward over already-embedded rows, position by position.
inline MatD naive_forward(const MatD& h0, const ModelParams<double>& p, const ModelConfig& c) {
  const double eps = 1e-5;
  const Index n = h0.rows();
  const Index d = c.d_model;
  const Index dh = d / c.heads;
  std::vector<std::vector<double>> x(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    for (Index j = 0; j < d; ++j) x[static_cast<std::size_t>(t)].push_back(h0(t, j));
  }
  for (const auto& bp : p.blocks) {
    std::vector<std::vector<double>> q(x.size()), k(x.size()), v(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
      const auto a = layer_norm(x[t], bp.ln1_g, bp.ln1_b, eps);
      q[t] = affine(a, bp.wq, bp.bq);
      k[t] = affine(a, bp.wk, bp.bk);
      v[t] = affine(a, bp.wv, bp.bv);
    }
    std::vector<std::vector<double>> next(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
      std::vector<double> ctx(static_cast<std::size_t>(d), 0.0);
      for (Index h = 0; h < c.heads; ++h) {
        std::vector<double> w(t + 1);
        for (std::size_t s = 0; s <= t; ++s) {
          double dot = 0;
          for (Index e = h * dh; e < (h + 1) * dh; ++e) {
            dot += q[t][static_cast<std::size_t>(e)] * k[s][static_cast<std::size_t>(e)];
          }
          w[s] = dot / std::sqrt(static_cast<double>(dh));
        }
        const double m = *std::max_element(w.begin(), w.end());
        double z = 0;
        for (double& e : w) z += (e = std::exp(e - m));
        for (std::size_t s = 0; s <= t; ++s) {
          for (Index e = h * dh; e < (h + 1) * dh; ++e) {
            ctx[static_cast<std::size_t>(e)] += w[s] / z * v[s][static_cast<std::size_t>(e)];
          }
        }
      }
      auto mid = affine(ctx, bp.wo, bp.bo);
      for (std::size_t j = 0; j < mid.size(); ++j) mid[j] += x[t][j];
      auto u = affine(layer_norm(mid, bp.ln2_g, bp.ln2_b, eps), bp.w1, bp.b1);
      for (double& e : u) e = gelu(e);
      auto out = affine(u, bp.w2, bp.b2);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += mid[j];
      next[t] = std::move(out);
    }
    x = std::move(next);
  }
  MatD logits(n, p.w_lm.rows());
  for (Index t = 0; t < n; ++t) {
    const auto hf = layer_norm(x[static_cast<std::size_t>(t)], p.lnf_g, p.lnf_b, eps);
    for (Index o = 0; o < p.w_lm.rows(); ++o) {
      double s = 0;
      for (Index j = 0; j < d; ++j) s += hf[static_cast<std::size_t>(j)] * p.w_lm(o, j);
      logits(t, o) = s;
    }
  }
  return logits;
}

// Tiny decoder used for finite-difference checks: D=16, L=2, V=20, and a
// one-word prompt so the sequence spans 2 + 10 = 12 positions.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.bins = 16;
  c.joints = 1;
  c.max_frames = 4;
  c.text_buckets = 16;
  c.text_width = 8;
  c.max_prompt_tokens = 4;
  return c;
}

inline void perturb_all(ModelParams<double>& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  p.for_each([&](const std::string&, MatD& m) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] += scale * normal01(rng);
  });
}

struct FdReport {
  double max_rel = 0.0;
  std::string worst;
  double floor = 0.0;
  Index checked = 0;
};

// Central differences on the summed NLL of one example against backward().
// Relative error |g - n| / max(|g|, |n|, tau) with tau = 1e-6 max(1, |L|):
// central differences carry roundoff of order eps |L| / h, so entries far
// below the loss scale (key biases, which softmax ignores) are judged
// against tau rather than against their own noise.
inline FdReport fd_check_model(const ModelConfig& c, const ModelParams<double>& p,
                               const std::vector<int>& prompt, const std::vector<std::int32_t>& tokens,
                               double h = 1e-5) {
  auto grads = ModelParams<double>::zeros(c);
  const double loss = example_loss<double>(p, c, prompt, tokens, &grads, 1.0).sum;
  std::vector<const MatD*> analytic;
  grads.for_each([&](const std::string&, const MatD& m) { analytic.push_back(&m); });

  ModelParams<double> q = p;
  std::vector<std::pair<std::string, MatD*>> slots;
  q.for_each([&](const std::string& name, MatD& m) { slots.push_back({name, &m}); });
  FdReport rep;
  rep.floor = 1e-6 * std::max(1.0, std::abs(loss));
  for (std::size_t s = 0; s < slots.size(); ++s) {
    MatD& m = *slots[s].second;
    for (Index i = 0; i < m.size(); ++i) {
      const double keep = m.data()[i];
      m.data()[i] = keep + h;
      const double up = example_loss<double>(q, c, prompt, tokens).sum;
      m.data()[i] = keep - h;
      const double dn = example_loss<double>(q, c, prompt, tokens).sum;
      m.data()[i] = keep;
      const double num = (up - dn) / (2 * h);
      const double ana = analytic[s]->data()[i];
      ++rep.checked;
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), rep.floor});
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = slots[s].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// Framed stream with `frames` random frames for the given config.
inline std::vector<std::int32_t> random_stream(const ModelConfig& c, Index frames, Rng& rng) {
  std::vector<std::int32_t> t{Vocabulary::kBos};
  for (Index i = 0; i < frames * 2 * c.joints; ++i) {
    t.push_back(Vocabulary::kOffset + static_cast<std::int32_t>(uniform_index(rng, c.bins)));
  }
  t.push_back(Vocabulary::kEos);
  return t;
}

}  // namespace skelgen::oracle
