#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skelgen/layers.hpp"
#include "skelgen/types.hpp"

namespace skelgen {

// Hashed bag-of-words prompt tokenizer standing in for a pretrained text
// encoder. Lowercases, splits on anything that is not [a-z0-9], and maps each
// word to 1 + FNV-1a(word) mod (buckets - 1). Row 0 is the terminator.
class PromptTokenizer {
 public:
  static constexpr int kTerminator = 0;

  explicit PromptTokenizer(int buckets = 4096, int max_tokens = 32);

  int buckets() const { return buckets_; }
  int max_tokens() const { return max_tokens_; }

  std::vector<std::string> words(std::string_view text) const;
  // C = min(words + 1, C_max) bucket ids; the terminator is always last.
  // Throws InputError on a prompt with no words.
  std::vector<int> tokenize(std::string_view text) const;

 private:
  int buckets_;
  int max_tokens_;
};

std::uint64_t fnv1a64(std::string_view s);

// C x D_enc lookup of the given bucket rows.
template <class S>
Mat<S> embed_prompt(const std::vector<int>& ids, const Mat<S>& table) {
  Mat<S> h(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) h.row(static_cast<Index>(i)) = table.row(ids[i]);
  return h;
}

template <class S>
Mat<S> encode_prompt(std::string_view text, const PromptTokenizer& tokenizer, const Mat<S>& table) {
  return embed_prompt(tokenizer.tokenize(text), table);
}

// Epsilon for the conditioning and fusion layer norms. Small enough that the
// pre-affine row variance is 1 to within 1e-6 for unit-scale inputs.
inline constexpr double kNormEps = 1e-10;

// e_cond = LN(h W_cond). Throws DimensionError on a width mismatch.
template <class S>
Mat<S> project_condition(const Mat<S>& h, const Mat<S>& w_cond, const Mat<S>& ln_gamma,
                         const Mat<S>& ln_beta, LayerNormCache<S>* cache = nullptr);

}  // namespace skelgen
