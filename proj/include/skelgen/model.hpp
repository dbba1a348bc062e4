#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skelgen/layers.hpp"
#include "skelgen/pose.hpp"
#include "skelgen/types.hpp"

namespace skelgen {

// Decoder-only transformer over [text prefix | BOS body EOS]. Pre-norm
// residual blocks, 4x GELU MLP, attention scaled by 1/sqrt(D / heads).
struct ModelConfig {
  int d_model = 256;
  int layers = 18;
  int heads = 8;
  int bins = 256;
  int joints = 62;
  int max_frames = 48;
  int text_buckets = 4096;
  int text_width = 256;
  int max_prompt_tokens = 32;
  bool train_text_table = true;

  int vocab() const { return Vocabulary::kOffset + bins; }
  int max_body_tokens() const { return 2 * joints * max_frames; }
  // C_max + M_max + 2; also the positional table size.
  int max_seq() const { return max_prompt_tokens + max_body_tokens() + 2; }
  int head_dim() const { return d_model / heads; }

  // Throws DomainError on inconsistent settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// All parameters are stored as matrices (vectors as 1 x n) so one visitor
// covers checkpointing, optimization and gradient checks.
template <class S>
struct BlockParams {
  Mat<S> ln1_g, ln1_b;
  Mat<S> wq, wk, wv, wo;
  Mat<S> bq, bk, bv, bo;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1, w2, b2;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gamma", self.ln1_g);
    f(prefix + "ln1.beta", self.ln1_b);
    f(prefix + "attn.wq", self.wq);
    f(prefix + "attn.wk", self.wk);
    f(prefix + "attn.wv", self.wv);
    f(prefix + "attn.wo", self.wo);
    f(prefix + "attn.bq", self.bq);
    f(prefix + "attn.bk", self.bk);
    f(prefix + "attn.bv", self.bv);
    f(prefix + "attn.bo", self.bo);
    f(prefix + "ln2.gamma", self.ln2_g);
    f(prefix + "ln2.beta", self.ln2_b);
    f(prefix + "mlp.w1", self.w1);
    f(prefix + "mlp.b1", self.b1);
    f(prefix + "mlp.w2", self.w2);
    f(prefix + "mlp.b2", self.b2);
  }
};

template <class S>
struct ModelParams {
  Mat<S> text_table;  // buckets x D_enc
  Mat<S> w_cond;      // D_enc x D
  Mat<S> cond_ln_g, cond_ln_b;
  Mat<S> tok_emb;  // V x D
  Mat<S> pos_emb;  // max_seq x D
  std::vector<BlockParams<S>> blocks;
  Mat<S> lnf_g, lnf_b;
  Mat<S> w_lm;  // V x D

  static ModelParams zeros(const ModelConfig& config);
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("text.table"), self.text_table);
    f(std::string("cond.w"), self.w_cond);
    f(std::string("cond.ln.gamma"), self.cond_ln_g);
    f(std::string("cond.ln.beta"), self.cond_ln_b);
    f(std::string("tok_emb"), self.tok_emb);
    f(std::string("pos_emb"), self.pos_emb);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      BlockParams<S>::visit(self.blocks[i], "block" + std::to_string(i) + ".", f);
    }
    f(std::string("lnf.gamma"), self.lnf_g);
    f(std::string("lnf.beta"), self.lnf_b);
    f(std::string("lm_head"), self.w_lm);
  }
  template <class F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  template <class T>
  ModelParams<T> cast() const;
  Index count() const;
  // Checks shapes against config; throws DimensionError.
  void check(const ModelConfig& config) const;
};

template <class S>
struct BlockCache {
  Mat<S> x_in;
  LayerNormCache<S> ln1;
  Mat<S> a, q, k, v;
  std::vector<Mat<S>> probs;  // per head, S x S, zero above the diagonal
  Mat<S> ctx;
  Mat<S> x_mid;
  LayerNormCache<S> ln2;
  Mat<S> b, u, g;
};

template <class S>
struct ForwardCache {
  std::vector<int> prompt_ids;
  std::vector<std::int32_t> tokens;
  Mat<S> h_text;
  LayerNormCache<S> cond_ln;
  std::vector<BlockCache<S>> blocks;
  LayerNormCache<S> lnf;
  Mat<S> hf;
  Index prefix_len = 0;
};

// e_cond = LN(table[ids] W_cond).
template <class S>
Mat<S> condition_prefix(const std::vector<int>& prompt_ids, const ModelParams<S>& params,
                        ForwardCache<S>* cache = nullptr);

// H0 = [prefix; E_pose[tokens]] + pos[0:C+N]. Throws LengthError past max_seq.
template <class S>
Mat<S> embed_and_concat(const Mat<S>& prefix, std::span<const std::int32_t> tokens,
                        const ModelParams<S>& params, const ModelConfig& config);

// Logits O = LN_f(H_L) W_lm^T for every position. Throws NumericError with the
// block index if an activation becomes non-finite.
template <class S>
Mat<S> forward(const Mat<S>& h0, const ModelParams<S>& params, const ModelConfig& config,
               ForwardCache<S>* cache = nullptr);

// Attention probabilities of one block/head from a cached forward pass.
template <class S>
const Mat<S>& attention_map(const ForwardCache<S>& cache, int block, int head);

struct LossResult {
  double sum = 0.0;
  Index count = 0;
  std::vector<double> per_position;
  double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
};

// Supervision for one sequence of length C + tokens.size(): logit position
// C + i predicts tokens[i + 1] for every i up to and including the position
// that predicts the terminating EOS. Prefix, BOS-target and PAD are masked.
struct SequenceTargets {
  std::vector<std::int32_t> targets;  // -1 where unsupervised
  std::vector<std::uint8_t> mask;
};
SequenceTargets make_targets(Index prefix_len, std::span<const std::int32_t> tokens);

// Cross entropy over masked positions. If dlogits is given it receives
// grad_scale * d(sum NLL)/d(logits). Throws InputError on an empty mask.
template <class S>
LossResult sequence_loss(const Mat<S>& logits, std::span<const std::int32_t> targets,
                         std::span<const std::uint8_t> mask, Mat<S>* dlogits = nullptr,
                         double grad_scale = 1.0);

// Accumulates parameter gradients given dL/dlogits and the forward cache.
template <class S>
void backward(const Mat<S>& dlogits, const ForwardCache<S>& cache, const ModelParams<S>& params,
              const ModelConfig& config, ModelParams<S>& grads);

// One example end to end: forward, masked loss, and (if grads != nullptr)
// backward with upstream scale `grad_scale` on the summed NLL.
template <class S>
LossResult example_loss(const ModelParams<S>& params, const ModelConfig& config,
                        const std::vector<int>& prompt_ids, std::span<const std::int32_t> tokens,
                        ModelParams<S>* grads = nullptr, double grad_scale = 1.0);

// Incremental decoding with a per-block key/value cache. Rows pushed must be
// already-embedded inputs (token or prefix row plus positional embedding).
template <class S>
class DecoderState {
 public:
  DecoderState(const ModelParams<S>& params, const ModelConfig& config);

  // Appends one position; returns its logits (1 x V) when want_logits.
  RowVec<S> push(const RowVec<S>& x, bool want_logits);
  Index length() const { return length_; }

 private:
  const ModelParams<S>& params_;
  const ModelConfig& config_;
  std::vector<Mat<S>> keys_, values_;
  Index length_ = 0;
};

}  // namespace skelgen
