#include "skelgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "skelgen/error.hpp"
#include "skelgen/rng.hpp"

namespace skelgen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Indices sorted by value descending, index ascending on ties.
std::vector<Index> descending_order(const VecD& v) {
  std::vector<Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) > v(b); });
  return order;
}

}  // namespace

DecodeStrategy parse_strategy(const std::string& name) {
  if (name == "greedy") return DecodeStrategy::kGreedy;
  if (name == "topk" || name == "top-k") return DecodeStrategy::kTopK;
  if (name == "nucleus" || name == "top-p") return DecodeStrategy::kNucleus;
  throw ConfigError("sampler", "unknown decoding strategy '" + name + "' (greedy, topk, nucleus)");
}

std::string to_string(DecodeStrategy s) {
  switch (s) {
    case DecodeStrategy::kGreedy: return "greedy";
    case DecodeStrategy::kTopK: return "topk";
    case DecodeStrategy::kNucleus: return "nucleus";
  }
  return "?";
}

void DecodeConfig::validate() const {
  if (k < 1) throw ConfigError("sampler", "k must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("sampler", "p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("sampler", "temperature must be positive");
  if (max_body_tokens < 0) throw ConfigError("sampler", "max body tokens must be >= 0");
}

VecD softmax(const VecD& logits) {
  const double m = logits.maxCoeff();
  VecD e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Index argmax(const VecD& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

VecD top_k_filter(const VecD& logits, int k) {
  const Index n = logits.size();
  const Index keep = std::clamp<Index>(k, 1, n);
  const auto order = descending_order(logits);
  VecD out = VecD::Zero(n);
  const double m = logits(order[0]);
  double z = 0.0;
  for (Index i = 0; i < keep; ++i) {
    const Index t = order[static_cast<std::size_t>(i)];
    out(t) = std::exp(logits(t) - m);
    z += out(t);
  }
  return out / z;
}

VecD nucleus_filter(const VecD& logits, double p) {
  const VecD probs = softmax(logits);
  if (p >= 1.0) return probs;
  const auto order = descending_order(probs);
  VecD out = VecD::Zero(probs.size());
  double mass = 0.0;
  for (Index t : order) {
    out(t) = probs(t);
    mass += probs(t);
    if (mass >= p) break;
  }
  return out / mass;
}

Index sample_index(const VecD& probs, double u) {
  const double target = u * probs.sum();
  double acc = 0.0;
  Index last = -1;
  for (Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last = i;
    if (target < acc) return i;
  }
  return last;
}

void mask_logits(VecD& logits, Index body_len, const ModelConfig& config, const DecodeConfig& decode) {
  logits(Vocabulary::kPad) = kNegInf;
  logits(Vocabulary::kBos) = kNegInf;
  logits(Vocabulary::kReserved) = kNegInf;
  if (decode.eos_at_frame_boundary && body_len % frame_tokens(config.joints) != 0) {
    logits(Vocabulary::kEos) = kNegInf;
  }
}

TokenStream sample_from_prefix(const MatF& prefix, const ModelParams<float>& params,
                               const ModelConfig& config, const DecodeConfig& decode) {
  decode.validate();
  const Index c = prefix.rows();
  Index cap = decode.max_body_tokens > 0 ? decode.max_body_tokens : config.max_body_tokens();
  // Room for BOS and EOS after the prefix.
  cap = std::min<Index>(cap, config.max_seq() - c - 2);
  if (cap < 0) throw LengthError("sampler", "prompt prefix leaves no room for a stream");

  DecoderState<float> state(params, config);
  for (Index i = 0; i < c; ++i) {
    state.push(prefix.row(i) + params.pos_emb.row(i), false);
  }
  TokenStream out;
  out.framed = true;
  out.tokens.push_back(Vocabulary::kBos);
  Rng rng(derive_seed(decode.seed, 0x5a));
  std::int32_t next = Vocabulary::kBos;
  for (Index body = 0;; ++body) {
    const Index pos = c + body;
    const RowVec<float> logits_f = state.push(params.tok_emb.row(next) + params.pos_emb.row(pos), true);
    if (body == cap) break;
    VecD logits = logits_f.transpose().cast<double>() / decode.temperature;
    mask_logits(logits, body, config, decode);
    Index pick = 0;
    switch (decode.strategy) {
      case DecodeStrategy::kGreedy: pick = argmax(logits); break;
      case DecodeStrategy::kTopK: pick = sample_index(top_k_filter(logits, decode.k), uniform01(rng)); break;
      case DecodeStrategy::kNucleus: pick = sample_index(nucleus_filter(logits, decode.p), uniform01(rng)); break;
    }
    next = static_cast<std::int32_t>(pick);
    out.tokens.push_back(next);
    if (next == Vocabulary::kEos) return out;
  }
  out.tokens.push_back(Vocabulary::kEos);
  out.truncated = true;
  return out;
}

TokenStream sample_sequence(const std::string& prompt, const ModelParams<float>& params,
                            const ModelConfig& config, const PromptTokenizer& tokenizer,
                            const DecodeConfig& decode) {
  const MatF prefix = condition_prefix(tokenizer.tokenize(prompt), params);
  return sample_from_prefix(prefix, params, config, decode);
}

FinalizedPose finalize_pose(const TokenStream& stream, Index joints, const Vocabulary& vocab) {
  std::size_t begin = 0;
  if (!stream.tokens.empty() && stream.tokens.front() == Vocabulary::kBos) begin = 1;
  TokenStream body;
  for (std::size_t i = begin; i < stream.tokens.size() && vocab.is_body(stream.tokens[i]); ++i) {
    body.tokens.push_back(stream.tokens[i]);
  }
  const Index per_frame = frame_tokens(joints);
  const Index n = static_cast<Index>(body.tokens.size());
  const Index whole = n / per_frame;
  if (whole == 0) {
    throw EmptyMotionError("sampler", "stream holds no complete frame (" + std::to_string(n) +
                                          " body tokens, " + std::to_string(per_frame) +
                                          " per frame)");
  }
  body.tokens.resize(static_cast<std::size_t>(whole * per_frame));
  return {deserialize(body, joints, vocab), whole, n % per_frame != 0 ? 1 : 0};
}

}  // namespace skelgen
