#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skelgen/model.hpp"
#include "skelgen/pose_io.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

// AdamW with decoupled weight decay, constant learning rate.
struct TrainConfig {
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  int batch_size = 8;
  long steps = 1000;
  std::uint64_t seed = 0;
  long eval_interval = 100;
  // Global-norm clipping threshold; 0 disables it.
  double clip_norm = 0.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// One (prompt, framed stream) pair.
struct TrainExample {
  std::vector<int> prompt_ids;
  TokenStream stream;
  std::string label;
};

std::vector<TrainExample> make_examples(const std::vector<ClipRecord>& clips,
                                        const PromptTokenizer& tokenizer, const Vocabulary& vocab);

struct BatchRow {
  std::vector<int> prompt_ids;
  std::vector<std::int32_t> tokens;  // framed stream, right-padded with PAD
  SequenceTargets targets;
  Index pad = 0;
};

// Every row spans `length` positions (prefix + tokens).
struct PaddedBatch {
  std::vector<BatchRow> rows;
  Index length = 0;
};

// Right-pads with PAD to the longest row. Throws LengthError naming the
// first record longer than max_seq.
PaddedBatch pad_batch(std::span<const TrainExample> examples, const ModelConfig& config);

struct AdamState {
  ModelParams<float> m, v;
  long step = 0;

  static AdamState zeros(const ModelConfig& config);
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  Index supervised = 0;
};

// Per-row gradient buffers reused across steps.
struct GradWorkspace {
  std::vector<ModelParams<float>> rows;
};

// Mean supervised cross entropy and its gradient over a batch. Per-row
// gradients are reduced in row order, so the result does not depend on the
// thread count.
double batch_loss_and_grad(const PaddedBatch& batch, const ModelParams<float>& params,
                           const ModelConfig& config, ModelParams<float>& grads,
                           Index* supervised = nullptr, GradWorkspace* workspace = nullptr);

// Applies one AdamW update given gradients. Exposed for tests.
void adamw_update(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
                  const TrainConfig& config, const ModelConfig& model);

// Gradient, optional clipping, and AdamW update. Throws NumericError with a
// diagnostics line if the loss or gradient is non-finite.
StepResult train_step(const PaddedBatch& batch, ModelParams<float>& params, AdamState& state,
                      const TrainConfig& config, const ModelConfig& model,
                      GradWorkspace* workspace = nullptr);

// Example indices for a given step; a pure function of (n, batch, seed, step)
// so resumed runs see the same batches.
std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed,
                                       long step);

// Runs steps [state.step, end_step).
void train(ModelParams<float>& params, AdamState& state, const ModelConfig& model,
           const TrainConfig& config, std::span<const TrainExample> data, long end_step,
           const std::function<void(long, const StepResult&)>& on_step = {});

// Mean supervised cross entropy without gradients.
double evaluate_loss(const ModelParams<float>& params, const ModelConfig& model,
                     std::span<const TrainExample> data);

}  // namespace skelgen
