#include "skelgen/trainer.hpp"

#include <cmath>
#include <sstream>

#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/rng.hpp"

namespace skelgen {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("trainer", what); };
  if (!(lr > 0)) fail("lr must be positive");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) fail("betas must lie in (0,1)");
  if (!(eps > 0)) fail("eps must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (steps < 0) fail("steps must be non-negative");
  if (eval_interval < 1) fail("eval_interval must be positive");
  if (clip_norm < 0) fail("clip_norm must be non-negative");
}

std::vector<TrainExample> make_examples(const std::vector<ClipRecord>& clips,
                                        const PromptTokenizer& tokenizer, const Vocabulary& vocab) {
  std::vector<TrainExample> out;
  out.reserve(clips.size());
  for (const auto& c : clips) {
    out.push_back({tokenizer.tokenize(c.prompt), serialize(c.pose, vocab, true), c.prompt});
  }
  return out;
}

PaddedBatch pad_batch(std::span<const TrainExample> examples, const ModelConfig& config) {
  PaddedBatch batch;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (!ex.stream.framed) throw InputError("trainer", "record " + std::to_string(i) + " is not framed");
    const Index len = static_cast<Index>(ex.prompt_ids.size() + ex.stream.tokens.size());
    if (len > config.max_seq()) {
      throw LengthError("trainer", "record " + std::to_string(i) +
                                       (ex.label.empty() ? "" : " ('" + ex.label + "')") +
                                       " has length " + std::to_string(len) + " > max_seq " +
                                       std::to_string(config.max_seq()));
    }
    batch.length = std::max(batch.length, len);
  }
  for (const auto& ex : examples) {
    BatchRow row;
    row.prompt_ids = ex.prompt_ids;
    row.tokens = ex.stream.tokens;
    const Index len = static_cast<Index>(ex.prompt_ids.size() + ex.stream.tokens.size());
    row.pad = batch.length - len;
    row.tokens.insert(row.tokens.end(), static_cast<std::size_t>(row.pad), Vocabulary::kPad);
    row.targets = make_targets(static_cast<Index>(row.prompt_ids.size()), row.tokens);
    batch.rows.push_back(std::move(row));
  }
  return batch;
}

AdamState AdamState::zeros(const ModelConfig& config) {
  return {ModelParams<float>::zeros(config), ModelParams<float>::zeros(config), 0};
}

double batch_loss_and_grad(const PaddedBatch& batch, const ModelParams<float>& params,
                           const ModelConfig& config, ModelParams<float>& grads,
                           Index* supervised, GradWorkspace* workspace) {
  Index total = 0;
  for (const auto& r : batch.rows) {
    for (auto m : r.targets.mask) total += m;
  }
  if (total == 0) throw InputError("trainer", "batch has no supervised positions");
  const double scale = 1.0 / static_cast<double>(total);

  GradWorkspace local;
  auto& row_grads = (workspace ? *workspace : local).rows;
  if (row_grads.size() < batch.rows.size()) row_grads.resize(batch.rows.size());
  std::vector<double> sums(batch.rows.size(), 0.0);
  parallel_for(batch.rows.size(), [&](std::size_t i) {
    const auto& row = batch.rows[i];
    auto& g = row_grads[i];
    if (g.blocks.size() != static_cast<std::size_t>(config.layers) ||
        g.tok_emb.rows() != config.vocab() || g.tok_emb.cols() != config.d_model ||
        g.text_table.cols() != config.text_width) {
      g = ModelParams<float>::zeros(config);
    } else {
      g.for_each([](const std::string&, Mat<float>& m) { m.setZero(); });
    }
    sums[i] = example_loss<float>(params, config, row.prompt_ids, row.tokens, &g, scale).sum;
  });

  if (grads.blocks.size() != row_grads[0].blocks.size()) grads = ModelParams<float>::zeros(config);
  std::vector<Mat<float>*> dst;
  grads.for_each([&](const std::string&, Mat<float>& m) { dst.push_back(&m); });
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    std::size_t k = 0;
    row_grads[i].for_each([&](const std::string&, const Mat<float>& m) {
      if (i == 0) {
        *dst[k++] = m;
      } else {
        *dst[k++] += m;
      }
    });
  }
  double sum = 0.0;
  for (double s : sums) sum += s;
  if (supervised) *supervised = total;
  return sum * scale;
}

void adamw_update(ModelParams<float>& params, const ModelParams<float>& grads, AdamState& state,
                  const TrainConfig& config, const ModelConfig& model) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const float b1 = static_cast<float>(config.beta1);
  const float b2 = static_cast<float>(config.beta2);
  const float decay = static_cast<float>(1.0 - config.lr * config.weight_decay);
  const float step_size = static_cast<float>(config.lr / bc1);
  const float rbc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(config.eps);

  std::vector<Mat<float>*> p, m, v;
  std::vector<const Mat<float>*> g;
  std::vector<std::string> names;
  params.for_each([&](const std::string& name, Mat<float>& x) {
    p.push_back(&x);
    names.push_back(name);
  });
  grads.for_each([&](const std::string&, const Mat<float>& x) { g.push_back(&x); });
  state.m.for_each([&](const std::string&, Mat<float>& x) { m.push_back(&x); });
  state.v.for_each([&](const std::string&, Mat<float>& x) { v.push_back(&x); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!model.train_text_table && names[i] == "text.table") continue;
    auto pa = p[i]->array();
    const auto ga = g[i]->array();
    auto ma = m[i]->array();
    auto va = v[i]->array();
    ma = b1 * ma + (1.0f - b1) * ga;
    va = b2 * va + (1.0f - b2) * ga.square();
    pa = pa * decay - step_size * ma / (va.sqrt() * rbc2 + eps);
  }
}

StepResult train_step(const PaddedBatch& batch, ModelParams<float>& params, AdamState& state,
                      const TrainConfig& config, const ModelConfig& model,
                      GradWorkspace* workspace) {
  ModelParams<float> grads;
  StepResult result;
  try {
    result.loss = batch_loss_and_grad(batch, params, model, grads, &result.supervised, workspace);
  } catch (const NumericError& e) {
    std::ostringstream msg;
    msg << "step=" << state.step << " rows=" << batch.rows.size() << " length=" << batch.length << ": "
        << e.what();
    throw NumericError("trainer", msg.str(), e.where());
  }
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Mat<float>& m) {
    sq += m.template cast<double>().squaredNorm();
  });
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.loss) || !std::isfinite(result.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite training state at step=" << state.step << " loss=" << result.loss
        << " grad_norm=" << result.grad_norm << " rows=" << batch.rows.size()
        << " length=" << batch.length;
    throw NumericError("trainer", msg.str());
  }
  if (config.clip_norm > 0 && result.grad_norm > config.clip_norm) {
    const float f = static_cast<float>(config.clip_norm / result.grad_norm);
    grads.for_each([&](const std::string&, Mat<float>& m) { m *= f; });
  }
  adamw_update(params, grads, state, config, model);
  return result;
}

std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed,
                                       long step) {
  if (n == 0) throw InputError("trainer", "training set is empty");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~std::uint64_t{0};
  for (int b = 0; b < batch_size; ++b) {
    const std::uint64_t pos = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                              static_cast<std::uint64_t>(b);
    const std::uint64_t epoch = pos / n;
    if (epoch != perm_epoch) {
      perm.resize(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      Rng rng(derive_seed(seed, epoch));
      shuffle(perm, rng);
      perm_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

void train(ModelParams<float>& params, AdamState& state, const ModelConfig& model,
           const TrainConfig& config, std::span<const TrainExample> data, long end_step,
           const std::function<void(long, const StepResult&)>& on_step) {
  config.validate();
  std::vector<TrainExample> picked;
  GradWorkspace workspace;
  while (state.step < end_step) {
    const long step = state.step;
    picked.clear();
    for (auto i : batch_indices(data.size(), config.batch_size, config.seed, step)) {
      picked.push_back(data[i]);
    }
    const auto batch = pad_batch(picked, model);
    const auto r = train_step(batch, params, state, config, model, &workspace);
    if (on_step) on_step(step, r);
  }
}

double evaluate_loss(const ModelParams<float>& params, const ModelConfig& model,
                     std::span<const TrainExample> data) {
  std::vector<LossResult> results(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    results[i] = example_loss<float>(params, model, data[i].prompt_ids, data[i].stream.tokens);
  });
  double sum = 0.0;
  Index count = 0;
  for (const auto& r : results) {
    sum += r.sum;
    count += r.count;
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace skelgen
