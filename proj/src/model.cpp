#include "skelgen/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "skelgen/error.hpp"
#include "skelgen/rng.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

namespace {

constexpr double kBlockNormEps = 1e-5;

template <class S>
Mat<S> row(Index n, S value) {
  return Mat<S>::Constant(1, n, value);
}

template <class S>
void fill_normal(Mat<S>& m, Rng& rng, double stddev) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * normal01(rng));
}

template <class S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw DomainError("ar-decoder", what); };
  if (d_model < 1 || layers < 1 || heads < 1) fail("d_model, layers and heads must be positive");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (bins < 2) fail("bins must be >= 2");
  if (joints < 1 || max_frames < 1) fail("joints and max_frames must be positive");
  if (text_buckets < 2 || text_width < 1 || max_prompt_tokens < 1) fail("invalid text encoder size");
}

template <class S>
ModelParams<S> ModelParams<S>::zeros(const ModelConfig& c) {
  c.validate();
  const Index d = c.d_model;
  ModelParams p;
  p.text_table = Mat<S>::Zero(c.text_buckets, c.text_width);
  p.w_cond = Mat<S>::Zero(c.text_width, d);
  p.cond_ln_g = Mat<S>::Zero(1, d);
  p.cond_ln_b = Mat<S>::Zero(1, d);
  p.tok_emb = Mat<S>::Zero(c.vocab(), d);
  p.pos_emb = Mat<S>::Zero(c.max_seq(), d);
  p.blocks.resize(static_cast<std::size_t>(c.layers));
  for (auto& b : p.blocks) {
    b.ln1_g = b.ln1_b = b.ln2_g = b.ln2_b = Mat<S>::Zero(1, d);
    b.wq = b.wk = b.wv = b.wo = Mat<S>::Zero(d, d);
    b.bq = b.bk = b.bv = b.bo = Mat<S>::Zero(1, d);
    b.w1 = Mat<S>::Zero(d, 4 * d);
    b.b1 = Mat<S>::Zero(1, 4 * d);
    b.w2 = Mat<S>::Zero(4 * d, d);
    b.b2 = Mat<S>::Zero(1, d);
  }
  p.lnf_g = p.lnf_b = Mat<S>::Zero(1, d);
  p.w_lm = Mat<S>::Zero(c.vocab(), d);
  return p;
}

template <class S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& c, std::uint64_t seed) {
  ModelParams p = zeros(c);
  Rng rng(derive_seed(seed, 0x5eed));
  const double std = 0.02;
  const double out_std = std / std::sqrt(2.0 * c.layers);
  fill_normal(p.text_table, rng, 1.0);
  fill_normal(p.w_cond, rng, 1.0 / std::sqrt(static_cast<double>(c.text_width)));
  p.cond_ln_g.setOnes();
  fill_normal(p.tok_emb, rng, std);
  fill_normal(p.pos_emb, rng, 0.01);
  for (auto& b : p.blocks) {
    b.ln1_g.setOnes();
    b.ln2_g.setOnes();
    fill_normal(b.wq, rng, std);
    fill_normal(b.wk, rng, std);
    fill_normal(b.wv, rng, std);
    fill_normal(b.wo, rng, out_std);
    fill_normal(b.w1, rng, std);
    fill_normal(b.w2, rng, out_std);
  }
  p.lnf_g.setOnes();
  fill_normal(p.w_lm, rng, std);
  return p;
}

template <class S>
template <class T>
ModelParams<T> ModelParams<S>::cast() const {
  ModelParams<T> out;
  out.blocks.resize(blocks.size());
  std::vector<const Mat<S>*> src;
  for_each([&](const std::string&, const Mat<S>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, Mat<T>& m) { m = src[i++]->template cast<T>(); });
  return out;
}

template <class S>
Index ModelParams<S>::count() const {
  Index n = 0;
  for_each([&](const std::string&, const Mat<S>& m) { n += m.size(); });
  return n;
}

template <class S>
void ModelParams<S>::check(const ModelConfig& config) const {
  const auto ref = zeros(config);
  std::vector<std::pair<std::string, std::pair<Index, Index>>> want;
  ref.for_each([&](const std::string& name, const Mat<S>& m) {
    want.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  if (blocks.size() != ref.blocks.size()) {
    throw DimensionError("ar-decoder", "block count does not match config");
  }
  for_each([&](const std::string& name, const Mat<S>& m) {
    const auto& [n, shape] = want[i++];
    if (m.rows() != shape.first || m.cols() != shape.second) {
      throw DimensionError("ar-decoder", "parameter " + name + " has shape " +
                                             std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + ", expected " +
                                             std::to_string(shape.first) + "x" +
                                             std::to_string(shape.second));
    }
  });
}

template <class S>
Mat<S> condition_prefix(const std::vector<int>& prompt_ids, const ModelParams<S>& params,
                        ForwardCache<S>* cache) {
  Mat<S> h = embed_prompt(prompt_ids, params.text_table);
  LayerNormCache<S>* ln = cache ? &cache->cond_ln : nullptr;
  Mat<S> e = project_condition(h, params.w_cond, params.cond_ln_g, params.cond_ln_b, ln);
  if (cache) {
    cache->prompt_ids = prompt_ids;
    cache->h_text = std::move(h);
  }
  return e;
}

template <class S>
Mat<S> embed_and_concat(const Mat<S>& prefix, std::span<const std::int32_t> tokens,
                        const ModelParams<S>& params, const ModelConfig& config) {
  const Index c = prefix.rows();
  const Index n = c + static_cast<Index>(tokens.size());
  if (n > config.max_seq()) {
    throw LengthError("ar-decoder", "sequence length " + std::to_string(n) +
                                        " exceeds max_seq " + std::to_string(config.max_seq()));
  }
  if (prefix.cols() != config.d_model) {
    throw DimensionError("ar-decoder", "prefix width does not match d_model");
  }
  Mat<S> h0(n, config.d_model);
  h0.topRows(c) = prefix;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto t = tokens[i];
    if (t < 0 || t >= config.vocab()) {
      throw TokenError("ar-decoder", "token id " + std::to_string(t) + " outside vocabulary");
    }
    h0.row(c + static_cast<Index>(i)) = params.tok_emb.row(t);
  }
  h0 += params.pos_emb.topRows(n);
  return h0;
}

template <class S>
Mat<S> forward(const Mat<S>& h0, const ModelParams<S>& params, const ModelConfig& config,
               ForwardCache<S>* cache) {
  if (!all_finite(h0)) throw NumericError("ar-decoder", "non-finite input states", -1);
  const Index n = h0.rows();
  const Index d = config.d_model;
  const Index dh = config.head_dim();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const S eps = static_cast<S>(kBlockNormEps);
  if (cache) cache->blocks.assign(params.blocks.size(), {});

  Mat<S> x = h0;
  Mat<S> scores(n, n);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const auto& bp = params.blocks[l];
    BlockCache<S> local;
    BlockCache<S>& bc = cache ? cache->blocks[l] : local;
    bc.x_in = x;
    bc.a = layer_norm<S>(x, bp.ln1_g, bp.ln1_b, eps, &bc.ln1);
    bc.q.noalias() = bc.a * bp.wq;
    bc.q.rowwise() += bp.bq.row(0);
    bc.k.noalias() = bc.a * bp.wk;
    bc.k.rowwise() += bp.bk.row(0);
    bc.v.noalias() = bc.a * bp.wv;
    bc.v.rowwise() += bp.bv.row(0);
    bc.ctx.resize(n, d);
    bc.probs.assign(static_cast<std::size_t>(config.heads), Mat<S>());
    for (int h = 0; h < config.heads; ++h) {
      const auto qh = bc.q.middleCols(h * dh, dh);
      const auto kh = bc.k.middleCols(h * dh, dh);
      const auto vh = bc.v.middleCols(h * dh, dh);
      scores.noalias() = qh * kh.transpose();
      Mat<S>& p = bc.probs[static_cast<std::size_t>(h)];
      p.setZero(n, n);
      for (Index i = 0; i < n; ++i) {
        const auto visible = scores.row(i).head(i + 1);
        const S m = visible.maxCoeff() * scale;
        auto pr = p.row(i).head(i + 1);
        pr = ((visible.array() * scale) - m).exp().matrix();
        pr /= pr.sum();
      }
      bc.ctx.middleCols(h * dh, dh).noalias() = p * vh;
    }
    bc.x_mid = x;
    bc.x_mid.noalias() += bc.ctx * bp.wo;
    bc.x_mid.rowwise() += bp.bo.row(0);
    bc.b = layer_norm<S>(bc.x_mid, bp.ln2_g, bp.ln2_b, eps, &bc.ln2);
    bc.u.noalias() = bc.b * bp.w1;
    bc.u.rowwise() += bp.b1.row(0);
    bc.g = gelu(bc.u);
    x = bc.x_mid;
    x.noalias() += bc.g * bp.w2;
    x.rowwise() += bp.b2.row(0);
    if (!all_finite(x)) {
      throw NumericError("ar-decoder", "non-finite activation in block " + std::to_string(l),
                         static_cast<int>(l));
    }
  }
  LayerNormCache<S> lnf_local;
  Mat<S> hf = layer_norm<S>(x, params.lnf_g, params.lnf_b, eps, cache ? &cache->lnf : &lnf_local);
  Mat<S> logits(n, params.w_lm.rows());
  logits.noalias() = hf * params.w_lm.transpose();
  if (cache) cache->hf = std::move(hf);
  return logits;
}

template <class S>
const Mat<S>& attention_map(const ForwardCache<S>& cache, int block, int head) {
  return cache.blocks.at(static_cast<std::size_t>(block)).probs.at(static_cast<std::size_t>(head));
}

SequenceTargets make_targets(Index prefix_len, std::span<const std::int32_t> tokens) {
  const Index n = prefix_len + static_cast<Index>(tokens.size());
  SequenceTargets out;
  out.targets.assign(static_cast<std::size_t>(n), -1);
  out.mask.assign(static_cast<std::size_t>(n), 0);
  if (tokens.empty() || tokens[0] != Vocabulary::kBos) {
    throw TokenError("ar-decoder", "training stream must start with BOS");
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto next = tokens[i + 1];
    if (next == Vocabulary::kPad) break;
    const auto pos = static_cast<std::size_t>(prefix_len) + i;
    out.targets[pos] = next;
    out.mask[pos] = 1;
    if (next == Vocabulary::kEos) break;
  }
  return out;
}

template <class S>
LossResult sequence_loss(const Mat<S>& logits, std::span<const std::int32_t> targets,
                         std::span<const std::uint8_t> mask, Mat<S>* dlogits, double grad_scale) {
  const Index n = logits.rows();
  if (static_cast<Index>(targets.size()) != n || static_cast<Index>(mask.size()) != n) {
    throw DimensionError("ar-decoder", "targets and mask must cover every logit row");
  }
  LossResult out;
  out.per_position.assign(static_cast<std::size_t>(n), 0.0);
  if (dlogits) dlogits->setZero(n, logits.cols());
  for (Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const auto t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw TokenError("ar-decoder", "target outside vocabulary");
    const auto r = logits.row(i);
    const S m = r.maxCoeff();
    const RowVec<S> e = (r.array() - m).exp().matrix();
    const S total = e.sum();
    const double nll = static_cast<double>(m + std::log(total) - r(t));
    out.per_position[static_cast<std::size_t>(i)] = nll;
    out.sum += nll;
    ++out.count;
    if (dlogits) {
      auto g = dlogits->row(i);
      g = e * static_cast<S>(grad_scale / static_cast<double>(total));
      g(t) -= static_cast<S>(grad_scale);
    }
  }
  if (out.count == 0) throw InputError("ar-decoder", "loss mask selects no positions");
  if (!std::isfinite(out.sum)) throw NumericError("ar-decoder", "non-finite loss");
  return out;
}

template <class S>
void backward(const Mat<S>& dlogits, const ForwardCache<S>& cache, const ModelParams<S>& params,
              const ModelConfig& config, ModelParams<S>& grads) {
  const Index n = dlogits.rows();
  const Index dh = config.head_dim();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  grads.w_lm.noalias() += dlogits.transpose() * cache.hf;
  Mat<S> dhf = dlogits * params.w_lm;
  Mat<S> dx = layer_norm_backward<S>(dhf, cache.lnf, params.lnf_g, &grads.lnf_g, &grads.lnf_b);

  Mat<S> dp, ds;
  for (std::size_t li = params.blocks.size(); li-- > 0;) {
    const auto& bp = params.blocks[li];
    const auto& bc = cache.blocks[li];
    auto& gb = grads.blocks[li];

    // MLP branch
    gb.w2.noalias() += bc.g.transpose() * dx;
    gb.b2.row(0) += dx.colwise().sum();
    Mat<S> dgl = dx * bp.w2.transpose();
    Mat<S> du = gelu_backward(dgl, bc.u);
    gb.w1.noalias() += bc.b.transpose() * du;
    gb.b1.row(0) += du.colwise().sum();
    Mat<S> db = du * bp.w1.transpose();
    Mat<S> dmid = dx + layer_norm_backward<S>(db, bc.ln2, bp.ln2_g, &gb.ln2_g, &gb.ln2_b);

    // attention branch
    gb.wo.noalias() += bc.ctx.transpose() * dmid;
    gb.bo.row(0) += dmid.colwise().sum();
    Mat<S> dctx = dmid * bp.wo.transpose();
    Mat<S> dq(n, config.d_model), dk(n, config.d_model), dv(n, config.d_model);
    for (int h = 0; h < config.heads; ++h) {
      const auto& p = bc.probs[static_cast<std::size_t>(h)];
      const auto dch = dctx.middleCols(h * dh, dh);
      dp.noalias() = dch * bc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * dch;
      ds = p.cwiseProduct(dp);
      const Vec<S> rows = ds.rowwise().sum();
      ds.noalias() -= p.cwiseProduct(rows.replicate(1, n));
      ds *= scale;
      dq.middleCols(h * dh, dh).noalias() = ds * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * bc.q.middleCols(h * dh, dh);
    }
    gb.wq.noalias() += bc.a.transpose() * dq;
    gb.wk.noalias() += bc.a.transpose() * dk;
    gb.wv.noalias() += bc.a.transpose() * dv;
    gb.bq.row(0) += dq.colwise().sum();
    gb.bk.row(0) += dk.colwise().sum();
    gb.bv.row(0) += dv.colwise().sum();
    Mat<S> da = dq * bp.wq.transpose();
    da.noalias() += dk * bp.wk.transpose();
    da.noalias() += dv * bp.wv.transpose();
    dx = dmid + layer_norm_backward<S>(da, bc.ln1, bp.ln1_g, &gb.ln1_g, &gb.ln1_b);
  }

  // dx is now dL/dH0.
  grads.pos_emb.topRows(n) += dx;
  const Index c = cache.prefix_len;
  for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
    grads.tok_emb.row(cache.tokens[i]) += dx.row(c + static_cast<Index>(i));
  }
  const Mat<S> de = dx.topRows(c);
  const Mat<S> du = layer_norm_backward<S>(de, cache.cond_ln, params.cond_ln_g, &grads.cond_ln_g,
                                           &grads.cond_ln_b);
  grads.w_cond.noalias() += cache.h_text.transpose() * du;
  if (config.train_text_table) {
    const Mat<S> dh = du * params.w_cond.transpose();
    for (std::size_t i = 0; i < cache.prompt_ids.size(); ++i) {
      grads.text_table.row(cache.prompt_ids[i]) += dh.row(static_cast<Index>(i));
    }
  }
}

template <class S>
LossResult example_loss(const ModelParams<S>& params, const ModelConfig& config,
                        const std::vector<int>& prompt_ids, std::span<const std::int32_t> tokens,
                        ModelParams<S>* grads, double grad_scale) {
  ForwardCache<S> cache;
  ForwardCache<S>* cp = grads ? &cache : nullptr;
  const Mat<S> prefix = condition_prefix(prompt_ids, params, cp);
  const Mat<S> h0 = embed_and_concat<S>(prefix, tokens, params, config);
  const Mat<S> logits = forward(h0, params, config, cp);
  const auto st = make_targets(prefix.rows(), tokens);
  if (!grads) return sequence_loss<S>(logits, st.targets, st.mask);
  cache.prefix_len = prefix.rows();
  cache.tokens.assign(tokens.begin(), tokens.end());
  Mat<S> dlogits;
  auto result = sequence_loss<S>(logits, st.targets, st.mask, &dlogits, grad_scale);
  backward(dlogits, cache, params, config, *grads);
  return result;
}

template <class S>
DecoderState<S>::DecoderState(const ModelParams<S>& params, const ModelConfig& config)
    : params_(params), config_(config) {
  keys_.assign(params.blocks.size(), Mat<S>(config.max_seq(), config.d_model));
  values_.assign(params.blocks.size(), Mat<S>(config.max_seq(), config.d_model));
}

template <class S>
RowVec<S> DecoderState<S>::push(const RowVec<S>& input, bool want_logits) {
  if (length_ >= config_.max_seq()) throw LengthError("ar-decoder", "decoder state is full");
  const Index d = config_.d_model;
  const Index dh = config_.head_dim();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const S eps = static_cast<S>(kBlockNormEps);
  const Index pos = length_;
  Mat<S> x = input;
  RowVec<S> w(pos + 1);
  for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
    const auto& bp = params_.blocks[l];
    const Mat<S> a = layer_norm<S>(x, bp.ln1_g, bp.ln1_b, eps);
    RowVec<S> q = a * bp.wq + bp.bq;
    keys_[l].row(pos).noalias() = a * bp.wk + bp.bk;
    values_[l].row(pos).noalias() = a * bp.wv + bp.bv;
    RowVec<S> ctx(d);
    for (int h = 0; h < config_.heads; ++h) {
      const auto kh = keys_[l].topRows(pos + 1).middleCols(h * dh, dh);
      const auto vh = values_[l].topRows(pos + 1).middleCols(h * dh, dh);
      w.noalias() = q.segment(h * dh, dh) * kh.transpose();
      const S m = w.maxCoeff() * scale;
      w = ((w.array() * scale) - m).exp().matrix();
      w /= w.sum();
      ctx.segment(h * dh, dh).noalias() = w * vh;
    }
    x.noalias() += ctx * bp.wo;
    x += bp.bo;
    const Mat<S> b = layer_norm<S>(x, bp.ln2_g, bp.ln2_b, eps);
    Mat<S> u = b * bp.w1 + bp.b1;
    x.noalias() += gelu(u) * bp.w2;
    x += bp.b2;
    if (!x.allFinite()) {
      throw NumericError("ar-decoder", "non-finite activation in block " + std::to_string(l),
                         static_cast<int>(l));
    }
  }
  ++length_;
  if (!want_logits) return {};
  const Mat<S> hf = layer_norm<S>(x, params_.lnf_g, params_.lnf_b, eps);
  return hf * params_.w_lm.transpose();
}

#define SKELGEN_INSTANTIATE(S)                                                                   \
  template struct ModelParams<S>;                                                                \
  template Mat<S> condition_prefix(const std::vector<int>&, const ModelParams<S>&,               \
                                   ForwardCache<S>*);                                            \
  template Mat<S> embed_and_concat(const Mat<S>&, std::span<const std::int32_t>,                 \
                                   const ModelParams<S>&, const ModelConfig&);                   \
  template Mat<S> forward(const Mat<S>&, const ModelParams<S>&, const ModelConfig&,              \
                          ForwardCache<S>*);                                                     \
  template const Mat<S>& attention_map(const ForwardCache<S>&, int, int);                        \
  template LossResult sequence_loss(const Mat<S>&, std::span<const std::int32_t>,                \
                                    std::span<const std::uint8_t>, Mat<S>*, double);             \
  template void backward(const Mat<S>&, const ForwardCache<S>&, const ModelParams<S>&,           \
                         const ModelConfig&, ModelParams<S>&);                                   \
  template LossResult example_loss(const ModelParams<S>&, const ModelConfig&,                    \
                                   const std::vector<int>&, std::span<const std::int32_t>,       \
                                   ModelParams<S>*, double);                                     \
  template class DecoderState<S>;

SKELGEN_INSTANTIATE(float)
SKELGEN_INSTANTIATE(double)
#undef SKELGEN_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace skelgen
