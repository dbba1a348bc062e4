#include "skelgen/alf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "skelgen/error.hpp"
#include "skelgen/rng.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen::alf {

namespace {

template <class S>
Mat<S> normal(Index rows, Index cols, Rng& rng, double stddev) {
  Mat<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * normal01(rng));
  return m;
}

template <class S>
S norm_eps() {
  return static_cast<S>(kNormEps);
}

}  // namespace

template <class S>
FeatureStack<S> FeatureStack<S>::random(Index patches, Index depth, Index channels,
                                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xfea7));
  FeatureStack out;
  for (Index l = 0; l < depth; ++l) out.layers.push_back(normal<S>(patches, channels, rng, 1.0));
  return out;
}

template <class S>
FusionParams<S> FusionParams<S>::zeros(Index depth, Index d, Index out) {
  FusionParams p;
  p.beta = p.delta = Mat<S>::Zero(depth, d);
  p.wq = p.wk = p.wv = p.wo = Mat<S>::Zero(d, d);
  p.bq = p.bk = p.bv = p.bo = p.ln_g = p.ln_b = Mat<S>::Zero(1, d);
  p.w1 = Mat<S>::Zero(d, 2 * d);
  p.b1 = Mat<S>::Zero(1, 2 * d);
  p.w2 = Mat<S>::Zero(2 * d, out);
  p.b2 = Mat<S>::Zero(1, out);
  return p;
}

template <class S>
FusionParams<S> FusionParams<S>::random(Index depth, Index d, Index out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xa1f));
  const double w = 1.0 / std::sqrt(static_cast<double>(d));
  FusionParams p;
  p.beta = normal<S>(depth, d, rng, 0.2);
  p.delta = normal<S>(depth, d, rng, 0.2);
  p.wq = normal<S>(d, d, rng, w);
  p.wk = normal<S>(d, d, rng, w);
  p.wv = normal<S>(d, d, rng, w);
  p.wo = normal<S>(d, d, rng, w);
  p.bq = normal<S>(1, d, rng, 0.1);
  p.bk = normal<S>(1, d, rng, 0.1);
  p.bv = normal<S>(1, d, rng, 0.1);
  p.bo = normal<S>(1, d, rng, 0.1);
  p.ln_g = (Mat<S>::Ones(1, d) + normal<S>(1, d, rng, 0.1)).eval();
  p.ln_b = normal<S>(1, d, rng, 0.1);
  p.w1 = normal<S>(d, 2 * d, rng, w);
  p.b1 = normal<S>(1, 2 * d, rng, 0.1);
  p.w2 = normal<S>(2 * d, out, rng, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
  p.b2 = normal<S>(1, out, rng, 0.1);
  return p;
}

template <class S>
FeatureStack<S> film(const FeatureStack<S>& stack, const Mat<S>& beta, const Mat<S>& delta,
                     FilmCache<S>* cache) {
  const Index depth = stack.depth();
  if (beta.rows() != depth || delta.rows() != depth || beta.cols() != stack.channels() ||
      delta.cols() != stack.channels()) {
    throw DimensionError("alf-kernel", "FiLM parameters must be L x d");
  }
  if (cache) cache->norm.assign(static_cast<std::size_t>(depth), {});
  const Mat<S> none;
  FeatureStack<S> out;
  for (Index l = 0; l < depth; ++l) {
    LayerNormCache<S> local;
    auto& ln = cache ? cache->norm[static_cast<std::size_t>(l)] : local;
    Mat<S> y = layer_norm<S>(stack.layers[static_cast<std::size_t>(l)], none, none, norm_eps<S>(), &ln);
    y.array().rowwise() *= (S(1) + beta.row(l).array());
    y.rowwise() += delta.row(l);
    out.layers.push_back(std::move(y));
  }
  return out;
}

template <class S>
FeatureStack<S> film_backward(const FeatureStack<S>& dout, const FilmCache<S>& cache,
                              const Mat<S>& beta, Mat<S>& dbeta, Mat<S>& ddelta) {
  const Mat<S> none;
  FeatureStack<S> din;
  for (Index l = 0; l < dout.depth(); ++l) {
    const auto& g = dout.layers[static_cast<std::size_t>(l)];
    const auto& ln = cache.norm[static_cast<std::size_t>(l)];
    dbeta.row(l) += g.cwiseProduct(ln.xhat).colwise().sum();
    ddelta.row(l) += g.colwise().sum();
    Mat<S> dn = g;
    dn.array().rowwise() *= (S(1) + beta.row(l).array());
    din.layers.push_back(layer_norm_backward<S>(dn, ln, none, nullptr, nullptr));
  }
  return din;
}

template <class S>
Mat<S> aggregate(const FeatureStack<S>& m, const FusionParams<S>& p, AggregateCache<S>* cache) {
  const Index n = m.patches();
  const Index depth = m.depth();
  const Index d = m.channels();
  if (depth < 1) throw DimensionError("alf-kernel", "feature stack needs at least one layer");
  if (p.wq.rows() != d) throw DimensionError("alf-kernel", "aggregation width mismatch");
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  AggregateCache<S> local;
  auto& c = cache ? *cache : local;
  c.q = m.layers[0] * p.wq;
  c.q.rowwise() += p.bq.row(0);
  c.k.clear();
  c.v.clear();
  c.weights.resize(n, depth);
  for (Index l = 0; l < depth; ++l) {
    Mat<S> k = m.layers[static_cast<std::size_t>(l)] * p.wk;
    k.rowwise() += p.bk.row(0);
    Mat<S> v = m.layers[static_cast<std::size_t>(l)] * p.wv;
    v.rowwise() += p.bv.row(0);
    c.weights.col(l) = c.q.cwiseProduct(k).rowwise().sum() * scale;
    c.k.push_back(std::move(k));
    c.v.push_back(std::move(v));
  }
  for (Index i = 0; i < n; ++i) c.weights.row(i) = softmax(c.weights.row(i));
  c.ctx = Mat<S>::Zero(n, d);
  for (Index l = 0; l < depth; ++l) {
    c.ctx += (c.v[static_cast<std::size_t>(l)].array().colwise() * c.weights.col(l).array()).matrix();
  }
  Mat<S> out = c.ctx * p.wo;
  out.rowwise() += p.bo.row(0);
  return out;
}

template <class S>
FeatureStack<S> aggregate_backward(const Mat<S>& dout, const FeatureStack<S>& m,
                                   const AggregateCache<S>& c, const FusionParams<S>& p,
                                   FusionParams<S>& g) {
  const Index n = m.patches();
  const Index depth = m.depth();
  const Index d = m.channels();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  g.wo.noalias() += c.ctx.transpose() * dout;
  g.bo.row(0) += dout.colwise().sum();
  const Mat<S> dctx = dout * p.wo.transpose();

  Mat<S> dw(n, depth);
  for (Index l = 0; l < depth; ++l) {
    dw.col(l) = dctx.cwiseProduct(c.v[static_cast<std::size_t>(l)]).rowwise().sum();
  }
  const Vec<S> inner = c.weights.cwiseProduct(dw).rowwise().sum();
  Mat<S> ds = c.weights.cwiseProduct(dw - inner.replicate(1, depth)) * scale;

  FeatureStack<S> din;
  Mat<S> dq = Mat<S>::Zero(n, d);
  for (Index l = 0; l < depth; ++l) {
    const auto& x = m.layers[static_cast<std::size_t>(l)];
    const Mat<S> dv = (dctx.array().colwise() * c.weights.col(l).array()).matrix();
    const Mat<S> dk = (c.q.array().colwise() * ds.col(l).array()).matrix();
    dq += (c.k[static_cast<std::size_t>(l)].array().colwise() * ds.col(l).array()).matrix();
    g.wk.noalias() += x.transpose() * dk;
    g.bk.row(0) += dk.colwise().sum();
    g.wv.noalias() += x.transpose() * dv;
    g.bv.row(0) += dv.colwise().sum();
    Mat<S> dx = dk * p.wk.transpose();
    dx.noalias() += dv * p.wv.transpose();
    din.layers.push_back(std::move(dx));
  }
  g.wq.noalias() += m.layers[0].transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  din.layers[0].noalias() += dq * p.wq.transpose();
  return din;
}

template <class S>
Mat<S> project(const Mat<S>& x, const FusionParams<S>& p, ProjectCache<S>* cache) {
  if (x.cols() != p.w1.rows()) throw DimensionError("alf-kernel", "projection input width mismatch");
  ProjectCache<S> local;
  auto& c = cache ? *cache : local;
  c.z = layer_norm<S>(x, p.ln_g, p.ln_b, norm_eps<S>(), &c.ln);
  c.u = c.z * p.w1;
  c.u.rowwise() += p.b1.row(0);
  c.h = gelu(c.u);
  Mat<S> out = c.h * p.w2;
  out.rowwise() += p.b2.row(0);
  return out;
}

template <class S>
Mat<S> project_backward(const Mat<S>& dout, const ProjectCache<S>& c, const FusionParams<S>& p,
                        FusionParams<S>& g) {
  g.w2.noalias() += c.h.transpose() * dout;
  g.b2.row(0) += dout.colwise().sum();
  const Mat<S> du = gelu_backward<S>(dout * p.w2.transpose(), c.u);
  g.w1.noalias() += c.z.transpose() * du;
  g.b1.row(0) += du.colwise().sum();
  return layer_norm_backward<S>(du * p.w1.transpose(), c.ln, p.ln_g, &g.ln_g, &g.ln_b);
}

template <class S>
Mat<S> fuse(const FeatureStack<S>& stack, const FusionParams<S>& params) {
  return project(aggregate(film(stack, params.beta, params.delta), params), params);
}

template <class S>
void LoraAdapter<S>::validate() const {
  const Index r = a.rows();
  if (r < 1) throw DimensionError("alf-kernel", "LoRA rank must be >= 1");
  if (b.cols() != r) throw DimensionError("alf-kernel", "LoRA B must be d_out x r");
  if (r > std::min(a.cols(), b.rows())) throw DimensionError("alf-kernel", "LoRA rank exceeds min(d_in, d_out)");
}

template <class S>
Vec<S> lora_apply(const Mat<S>& w, const LoraAdapter<S>& adapter, const Vec<S>& x) {
  adapter.validate();
  if (w.cols() != x.size() || adapter.a.cols() != x.size() || adapter.b.rows() != w.rows()) {
    throw DimensionError("alf-kernel", "LoRA shapes disagree: W " + std::to_string(w.rows()) + "x" +
                                           std::to_string(w.cols()) + ", x " + std::to_string(x.size()));
  }
  const Vec<S> ax = adapter.a * x;
  Vec<S> y = w * x;
  y.noalias() += (adapter.alpha / static_cast<S>(adapter.rank())) * (adapter.b * ax);
  return y;
}

std::string to_string(CheckedOp op) {
  switch (op) {
    case CheckedOp::kFilm: return "film";
    case CheckedOp::kAggregate: return "aggregate";
    case CheckedOp::kProject: return "project";
    case CheckedOp::kLora: return "lora";
    case CheckedOp::kFusionChain: return "chain";
  }
  return "?";
}

CheckedOp parse_checked_op(const std::string& name) {
  for (auto op : {CheckedOp::kFilm, CheckedOp::kAggregate, CheckedOp::kProject, CheckedOp::kLora,
                  CheckedOp::kFusionChain}) {
    if (to_string(op) == name) return op;
  }
  throw ConfigError("alf-kernel", "unknown op '" + name + "'");
}

namespace {

// A differentiable problem: named parameters, objective, and analytic grads.
struct Problem {
  std::vector<std::pair<std::string, MatD*>> params;
  std::function<double()> objective;
  std::function<std::map<std::string, MatD>()> gradients;
};

double objective_of(const MatD& out, const MatD& r) {
  return out.cwiseProduct(r).sum() + 0.5 * out.squaredNorm();
}

std::map<std::string, MatD> named(const FusionParams<double>& g, const std::vector<std::string>& keep) {
  std::map<std::string, MatD> out;
  g.for_each([&](const std::string& name, const MatD& m) {
    if (std::find(keep.begin(), keep.end(), name) != keep.end()) out[name] = m;
  });
  return out;
}

}  // namespace

GradCheckReport grad_check(CheckedOp op, const GradCheckSetup& s, double tolerance,
                           const GradientTamper& tamper) {
  Rng rng(derive_seed(s.seed, 0xc4ec));
  auto stack = FeatureStack<double>::random(s.patches, s.depth, s.channels, s.seed);
  auto params = FusionParams<double>::random(s.depth, s.channels, s.out, s.seed);
  LoraAdapter<double> lora{normal<double>(s.rank, s.d_in, rng, 1.0), normal<double>(s.d_out, s.rank, rng, 1.0), 1.5};
  MatD w = normal<double>(s.d_out, s.d_in, rng, 1.0);
  const VecD x = normal<double>(s.d_in, 1, rng, 1.0);
  // Inputs of the aggregate/project stages in isolation.
  const auto modulated = film(stack, params.beta, params.delta);
  const MatD pooled = normal<double>(s.patches, s.channels, rng, 1.0);

  Problem prob;
  std::vector<std::string> names;
  auto take = [&](std::initializer_list<const char*> list) {
    params.for_each([&](const std::string& name, MatD& m) {
      for (const char* n : list) {
        if (name == n) {
          prob.params.emplace_back(name, &m);
          names.push_back(name);
        }
      }
    });
  };
  MatD r;
  switch (op) {
    case CheckedOp::kFilm: {
      take({"film.beta", "film.delta"});
      r = normal<double>(s.patches, s.depth * s.channels, rng, 1.0);
      auto flat = [&](const FeatureStack<double>& f) {
        MatD o(s.patches, s.depth * s.channels);
        for (Index l = 0; l < s.depth; ++l) o.middleCols(l * s.channels, s.channels) = f.layers[l];
        return o;
      };
      prob.objective = [&, flat] { return objective_of(flat(film(stack, params.beta, params.delta)), r); };
      prob.gradients = [&, flat] {
        FilmCache<double> cache;
        const MatD out = flat(film(stack, params.beta, params.delta, &cache));
        const MatD dflat = r + out;
        FeatureStack<double> dout;
        for (Index l = 0; l < s.depth; ++l) dout.layers.push_back(dflat.middleCols(l * s.channels, s.channels));
        auto g = FusionParams<double>::zeros(s.depth, s.channels, s.out);
        film_backward(dout, cache, params.beta, g.beta, g.delta);
        return named(g, names);
      };
      break;
    }
    case CheckedOp::kAggregate: {
      take({"agg.wq", "agg.wk", "agg.wv", "agg.wo", "agg.bq", "agg.bk", "agg.bv", "agg.bo"});
      r = normal<double>(s.patches, s.channels, rng, 1.0);
      prob.objective = [&] { return objective_of(aggregate(modulated, params), r); };
      prob.gradients = [&] {
        AggregateCache<double> cache;
        const MatD out = aggregate(modulated, params, &cache);
        auto g = FusionParams<double>::zeros(s.depth, s.channels, s.out);
        aggregate_backward<double>(r + out, modulated, cache, params, g);
        return named(g, names);
      };
      break;
    }
    case CheckedOp::kProject: {
      take({"proj.ln.gamma", "proj.ln.beta", "proj.w1", "proj.b1", "proj.w2", "proj.b2"});
      r = normal<double>(s.patches, s.out, rng, 1.0);
      prob.objective = [&] { return objective_of(project(pooled, params), r); };
      prob.gradients = [&] {
        ProjectCache<double> cache;
        const MatD out = project(pooled, params, &cache);
        auto g = FusionParams<double>::zeros(s.depth, s.channels, s.out);
        project_backward<double>(r + out, cache, params, g);
        return named(g, names);
      };
      break;
    }
    case CheckedOp::kFusionChain: {
      params.for_each([&](const std::string& name, MatD& m) {
        prob.params.emplace_back(name, &m);
        names.push_back(name);
      });
      r = normal<double>(s.patches, s.out, rng, 1.0);
      prob.objective = [&] { return objective_of(fuse(stack, params), r); };
      prob.gradients = [&] {
        FilmCache<double> fc;
        AggregateCache<double> ac;
        ProjectCache<double> pc;
        const auto mod = film(stack, params.beta, params.delta, &fc);
        const MatD pooled_out = aggregate(mod, params, &ac);
        const MatD out = project(pooled_out, params, &pc);
        auto g = FusionParams<double>::zeros(s.depth, s.channels, s.out);
        const MatD dp = project_backward<double>(r + out, pc, params, g);
        const auto dmod = aggregate_backward<double>(dp, mod, ac, params, g);
        film_backward(dmod, fc, params.beta, g.beta, g.delta);
        return named(g, names);
      };
      break;
    }
    case CheckedOp::kLora: {
      prob.params = {{"lora.a", &lora.a}, {"lora.b", &lora.b}, {"lora.w", &w}};
      r = normal<double>(s.d_out, 1, rng, 1.0);
      // Linear objective: the op is linear in each parameter entry.
      prob.objective = [&] { return lora_apply(w, lora, x).dot(r.col(0)); };
      prob.gradients = [&] {
        const double f = lora.alpha / static_cast<double>(lora.rank());
        const VecD dy = r.col(0);
        const VecD ax = lora.a * x;
        std::map<std::string, MatD> g;
        g["lora.w"] = dy * x.transpose();
        g["lora.b"] = f * dy * ax.transpose();
        g["lora.a"] = f * (lora.b.transpose() * dy) * x.transpose();
        return g;
      };
      break;
    }
  }

  auto analytic = prob.gradients();
  GradCheckReport report;
  // Central differences carry roundoff of order eps |f| / h.
  report.floor = 1e-6 * std::max(1.0, std::abs(prob.objective()));
  for (auto& [name, m] : prob.params) {
    MatD& grad = analytic.at(name);
    if (tamper) tamper(name, grad);
    for (Index i = 0; i < m->size(); ++i) {
      double& v = m->data()[i];
      const double saved = v;
      v = saved + s.step;
      const double up = prob.objective();
      v = saved - s.step;
      const double down = prob.objective();
      v = saved;
      const double numeric = (up - down) / (2.0 * s.step);
      const double a = grad.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), report.floor});
      ++report.checked;
      if (report.entry < 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.param = name;
        report.entry = i;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

#define SKELGEN_INSTANTIATE(S)                                                                   \
  template struct FeatureStack<S>;                                                               \
  template struct FusionParams<S>;                                                               \
  template struct LoraAdapter<S>;                                                                \
  template FeatureStack<S> film(const FeatureStack<S>&, const Mat<S>&, const Mat<S>&,            \
                                FilmCache<S>*);                                                  \
  template FeatureStack<S> film_backward(const FeatureStack<S>&, const FilmCache<S>&,            \
                                         const Mat<S>&, Mat<S>&, Mat<S>&);                       \
  template Mat<S> aggregate(const FeatureStack<S>&, const FusionParams<S>&, AggregateCache<S>*); \
  template FeatureStack<S> aggregate_backward(const Mat<S>&, const FeatureStack<S>&,             \
                                              const AggregateCache<S>&, const FusionParams<S>&,  \
                                              FusionParams<S>&);                                 \
  template Mat<S> project(const Mat<S>&, const FusionParams<S>&, ProjectCache<S>*);              \
  template Mat<S> project_backward(const Mat<S>&, const ProjectCache<S>&, const FusionParams<S>&, \
                                   FusionParams<S>&);                                            \
  template Mat<S> fuse(const FeatureStack<S>&, const FusionParams<S>&);                          \
  template Vec<S> lora_apply(const Mat<S>&, const LoraAdapter<S>&, const Vec<S>&);

SKELGEN_INSTANTIATE(float)
SKELGEN_INSTANTIATE(double)
#undef SKELGEN_INSTANTIATE

}  // namespace skelgen::alf
