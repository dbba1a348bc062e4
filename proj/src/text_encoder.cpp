#include "skelgen/text_encoder.hpp"

#include <cctype>

#include "skelgen/error.hpp"

namespace skelgen {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PromptTokenizer::PromptTokenizer(int buckets, int max_tokens)
    : buckets_(buckets), max_tokens_(max_tokens) {
  if (buckets < 2) throw DomainError("text-encoder", "need at least 2 hash buckets");
  if (max_tokens < 1) throw DomainError("text-encoder", "C_max must be >= 1");
}

std::vector<std::string> PromptTokenizer::words(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) && c < 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<int> PromptTokenizer::tokenize(std::string_view text) const {
  const auto w = words(text);
  if (w.empty()) throw InputError("text-encoder", "prompt is empty");
  const std::size_t keep = std::min(w.size(), static_cast<std::size_t>(max_tokens_ - 1));
  std::vector<int> ids;
  ids.reserve(keep + 1);
  for (std::size_t i = 0; i < keep; ++i) {
    ids.push_back(1 + static_cast<int>(fnv1a64(w[i]) % static_cast<std::uint64_t>(buckets_ - 1)));
  }
  ids.push_back(kTerminator);
  return ids;
}

template <class S>
Mat<S> project_condition(const Mat<S>& h, const Mat<S>& w_cond, const Mat<S>& ln_gamma,
                         const Mat<S>& ln_beta, LayerNormCache<S>* cache) {
  if (h.cols() != w_cond.rows()) {
    throw DimensionError("text-encoder", "embedding width " + std::to_string(h.cols()) +
                                             " does not match W_cond rows " +
                                             std::to_string(w_cond.rows()));
  }
  if (ln_gamma.size() != w_cond.cols() || ln_beta.size() != w_cond.cols()) {
    throw DimensionError("text-encoder", "layer-norm parameters must have width D");
  }
  const Mat<S> u = h * w_cond;
  return layer_norm<S>(u, ln_gamma, ln_beta, static_cast<S>(kNormEps), cache);
}

template Mat<float> project_condition(const Mat<float>&, const Mat<float>&, const Mat<float>&,
                                      const Mat<float>&, LayerNormCache<float>*);
template Mat<double> project_condition(const Mat<double>&, const Mat<double>&, const Mat<double>&,
                                       const Mat<double>&, LayerNormCache<double>*);

}  // namespace skelgen
