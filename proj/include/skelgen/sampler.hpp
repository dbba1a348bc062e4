#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelgen/model.hpp"
#include "skelgen/pose.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

enum class DecodeStrategy { kGreedy, kTopK, kNucleus };

DecodeStrategy parse_strategy(const std::string& name);
std::string to_string(DecodeStrategy s);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::kTopK;
  int k = 10;
  double p = 0.9;
  double temperature = 1.0;
  // Cap on generated body tokens; 0 means the model's max_body_tokens().
  int max_body_tokens = 0;
  std::uint64_t seed = 0;
  // Only allow EOS where the body holds a whole number of frames.
  bool eos_at_frame_boundary = true;

  void validate() const;
};

// Softmax restricted to the k largest logits (ties go to the lower token id);
// k is clamped to [1, V].
VecD top_k_filter(const VecD& logits, int k);
// Smallest descending-probability prefix with mass >= p (crossing token kept),
// renormalized. p >= 1 returns the full softmax.
VecD nucleus_filter(const VecD& logits, double p);
VecD softmax(const VecD& logits);
// Index of the largest entry, lowest index on ties.
Index argmax(const VecD& v);

// Inverse-CDF draw from a probability vector.
Index sample_index(const VecD& probs, double u);

// Masks every special token except EOS, and EOS too when it is not allowed
// at this body length. Masked entries become -inf.
void mask_logits(VecD& logits, Index body_len, const ModelConfig& config, const DecodeConfig& decode);

// Generates a framed stream [BOS body EOS] after the prompt prefix. When the
// cap is reached without EOS the stream is closed with EOS and flagged
// truncated.
TokenStream sample_sequence(const std::string& prompt, const ModelParams<float>& params,
                            const ModelConfig& config, const PromptTokenizer& tokenizer,
                            const DecodeConfig& decode);

// Same, with a caller-supplied prefix (C x D) instead of a prompt.
TokenStream sample_from_prefix(const MatF& prefix, const ModelParams<float>& params,
                               const ModelConfig& config, const DecodeConfig& decode);

struct FinalizedPose {
  PoseSequence pose;
  Index frames_kept = 0;
  Index frames_dropped = 0;
};

// Takes the body up to the first non-body token, drops a trailing partial
// frame and deserializes. Throws EmptyMotionError when no frame survives.
FinalizedPose finalize_pose(const TokenStream& stream, Index joints, const Vocabulary& vocab);

}  // namespace skelgen
