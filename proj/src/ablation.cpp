#include "skelgen/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/trainer.hpp"

namespace skelgen {

namespace {

struct Generated {
  std::vector<ClipRecord> clips;
  long empty = 0;
  long truncated = 0;
};

Generated decode_all(const std::vector<std::string>& prompts, const ModelParams<float>& params,
                     const ModelConfig& model, const PromptTokenizer& tokenizer,
                     const DecodeConfig& base, std::uint64_t seed) {
  const Vocabulary vocab(model.bins);
  std::vector<std::optional<ClipRecord>> slots(prompts.size());
  std::vector<std::uint8_t> truncated(prompts.size(), 0);
  parallel_for(prompts.size(), [&](std::size_t i) {
    DecodeConfig d = base;
    d.seed = derive_seed(seed, i);
    const auto stream = sample_sequence(prompts[i], params, model, tokenizer, d);
    truncated[i] = stream.truncated;
    try {
      auto fin = finalize_pose(stream, model.joints, vocab);
      slots[i] = ClipRecord{prompts[i], 30.0, 512, 512, std::move(fin.pose)};
    } catch (const EmptyMotionError&) {
    }
  });
  Generated g;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    g.truncated += truncated[i];
    if (slots[i]) {
      g.clips.push_back(std::move(*slots[i]));
    } else {
      ++g.empty;
    }
  }
  return g;
}

}  // namespace

AblationResult run_ablation(const AblationConfig& cfg, const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const auto corpus = generate_dataset(cfg.clips, cfg.t_min, cfg.t_max, derive_seed(cfg.seed, 1));
  const auto parts = split(corpus, 0.9, derive_seed(cfg.seed, 2));
  std::vector<std::string> prompts;
  for (const auto& f : motion_families()) {
    for (int s = 0; s < cfg.samples_per_prompt; ++s) prompts.push_back(f->prompt());
  }

  AblationResult result;
  for (int bins : cfg.bins) {
    for (int layers : cfg.layers) {
      ModelConfig model;
      model.d_model = cfg.d_model;
      model.heads = cfg.heads;
      model.layers = layers;
      model.bins = bins;
      model.max_frames = static_cast<int>(cfg.t_max);
      model.text_width = cfg.text_width;
      model.validate();
      TrainConfig tc;
      tc.lr = cfg.lr;
      tc.batch_size = cfg.batch_size;
      tc.steps = cfg.steps;
      tc.seed = derive_seed(cfg.seed, 3);

      const PromptTokenizer tokenizer(model.text_buckets, model.max_prompt_tokens);
      const Vocabulary vocab(bins);
      const auto train_set = make_examples(parts.train, tokenizer, vocab);
      const auto test_set = make_examples(parts.test, tokenizer, vocab);
      auto params = ModelParams<float>::init(model, tc.seed);
      auto state = AdamState::zeros(model);
      std::vector<double> losses;
      train(params, state, model, tc, train_set, cfg.steps,
            [&](long, const StepResult& r) { losses.push_back(r.loss); });
      double tail = 0.0;
      const std::size_t n_tail = std::min<std::size_t>(10, losses.size());
      for (std::size_t i = losses.size() - n_tail; i < losses.size(); ++i) tail += losses[i];
      tail /= static_cast<double>(std::max<std::size_t>(n_tail, 1));
      const double test_loss = test_set.empty() ? 0.0 : evaluate_loss(params, model, test_set);
      {
        std::ostringstream msg;
        msg << "cell bins=" << bins << " layers=" << layers << " train_loss=" << tail
            << " test_loss=" << test_loss;
        say(msg.str());
      }

      const auto provider = make_provider(cfg.provider, model.joints, parts.train);
      AblationResult::DiversityCheck check{bins, layers, 0, 0};
      std::vector<std::vector<double>> per_strategy;
      for (auto strategy : cfg.strategies) {
        AblationCell cell;
        cell.bins = bins;
        cell.layers = layers;
        cell.strategy = strategy;
        cell.train_loss = tail;
        cell.test_loss = test_loss;
        DecodeConfig decode;
        decode.strategy = strategy;
        decode.k = cfg.k;
        int scored = 0;
        for (int s = 0; s < cfg.seeds; ++s) {
          const std::uint64_t run_seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(s));
          const auto gen = decode_all(prompts, params, model, tokenizer, decode, run_seed);
          cell.empty += gen.empty;
          cell.truncated += gen.truncated;
          if (gen.clips.size() < 2) {
            cell.diversity_per_seed.push_back(0.0);
            continue;
          }
          EvalOptions opt;
          opt.seed = run_seed;
          const auto m = evaluate(corpus, gen.clips, *provider, opt);
          cell.fid += m.fid;
          cell.rp1 += m.rp1;
          cell.rp3 += m.rp3;
          cell.mm_dist += m.mm_dist;
          cell.diversity += m.diversity;
          cell.diversity_per_seed.push_back(m.diversity);
          ++scored;
        }
        if (scored > 0) {
          const double n = static_cast<double>(scored);
          cell.fid /= n;
          cell.rp1 /= n;
          cell.rp3 /= n;
          cell.mm_dist /= n;
          cell.diversity /= n;
        }
        per_strategy.push_back(cell.diversity_per_seed);
        {
          std::ostringstream msg;
          msg << "cell bins=" << bins << " layers=" << layers << " strategy=" << to_string(strategy)
              << " fid=" << cell.fid << " rp1=" << cell.rp1 << " diversity=" << cell.diversity;
          say(msg.str());
        }
        result.cells.push_back(std::move(cell));
      }
      int greedy = -1, topk = -1;
      for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
        if (cfg.strategies[i] == DecodeStrategy::kGreedy) greedy = static_cast<int>(i);
        if (cfg.strategies[i] == DecodeStrategy::kTopK) topk = static_cast<int>(i);
      }
      if (greedy >= 0 && topk >= 0) {
        for (int s = 0; s < cfg.seeds; ++s) {
          ++check.runs;
          if (per_strategy[static_cast<std::size_t>(greedy)][static_cast<std::size_t>(s)] <=
              per_strategy[static_cast<std::size_t>(topk)][static_cast<std::size_t>(s)]) {
            ++check.wins;
          }
        }
        result.checks.push_back(check);
      }
    }
  }
  return result;
}

std::string AblationResult::table() const {
  std::ostringstream out;
  out << "| bins | layers | strategy | train CE | test CE | FID | RP@1 | RP@3 | Diversity | MM-Dist | empty | truncated |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  char buf[512];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "| %d | %d | %s | %.4f | %.4f | %.4f | %.3f | %.3f | %.4f | %.4f | %ld | %ld |\n",
                  c.bins, c.layers, to_string(c.strategy).c_str(), c.train_loss, c.test_loss, c.fid,
                  c.rp1, c.rp3, c.diversity, c.mm_dist, c.empty, c.truncated);
    out << buf;
  }
  if (!checks.empty()) {
    out << "\n| bins | layers | greedy diversity <= top-k diversity |\n|---|---|---|\n";
    for (const auto& k : checks) {
      out << "| " << k.bins << " | " << k.layers << " | " << k.wins << "/" << k.runs << " |\n";
    }
  }
  return out.str();
}

std::string AblationResult::to_json() const {
  nlohmann::ordered_json j;
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"bins", c.bins},
                          {"layers", c.layers},
                          {"strategy", to_string(c.strategy)},
                          {"train_loss", c.train_loss},
                          {"test_loss", c.test_loss},
                          {"fid", c.fid},
                          {"rp@1", c.rp1},
                          {"rp@3", c.rp3},
                          {"diversity", c.diversity},
                          {"diversity_per_seed", c.diversity_per_seed},
                          {"mm_dist", c.mm_dist},
                          {"empty", c.empty},
                          {"truncated", c.truncated}});
  }
  j["diversity_checks"] = nlohmann::ordered_json::array();
  for (const auto& k : checks) {
    j["diversity_checks"].push_back({{"bins", k.bins}, {"layers", k.layers}, {"wins", k.wins}, {"runs", k.runs}});
  }
  j["diversity_ordered"] = diversity_ordered();
  return j.dump(2);
}

bool AblationResult::diversity_ordered() const {
  if (checks.empty()) return false;
  for (const auto& k : checks) {
    if (k.wins < k.runs - 1) return false;
  }
  return true;
}

}  // namespace skelgen
