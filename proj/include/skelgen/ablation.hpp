#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skelgen/metrics.hpp"
#include "skelgen/sampler.hpp"

namespace skelgen {

// Grid over quantization bins, decoder depth and decoding strategy at desk
// scale. Each (bins, layers) cell trains one model; each strategy decodes
// from it under `seeds` sampling seeds.
struct AblationConfig {
  std::vector<int> bins = {64, 256};
  std::vector<int> layers = {6, 18};
  std::vector<DecodeStrategy> strategies = {DecodeStrategy::kGreedy, DecodeStrategy::kTopK};
  int d_model = 32;
  int heads = 4;
  int text_width = 32;
  std::size_t clips = 40;
  Index t_min = 2;
  Index t_max = 2;
  long steps = 400;
  double lr = 1e-3;
  int batch_size = 8;
  int samples_per_prompt = 4;
  int seeds = 5;
  int k = 10;
  std::string provider = "proto64";
  std::uint64_t seed = 0;
};

struct AblationCell {
  int bins = 0;
  int layers = 0;
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  double train_loss = 0.0;  // mean over the last 10 steps
  double test_loss = 0.0;
  // Means over seeds.
  double fid = 0.0, rp1 = 0.0, rp3 = 0.0, diversity = 0.0, mm_dist = 0.0;
  std::vector<double> diversity_per_seed;
  long empty = 0;      // samples with no complete frame
  long truncated = 0;  // samples that hit the length cap
};

struct AblationResult {
  std::vector<AblationCell> cells;
  // Per (bins, layers): seeds where greedy diversity <= top-k diversity.
  struct DiversityCheck {
    int bins = 0, layers = 0;
    int wins = 0, runs = 0;
  };
  std::vector<DiversityCheck> checks;

  std::string table() const;  // markdown
  std::string to_json() const;
  // Every cell with both strategies has wins >= runs - 1.
  bool diversity_ordered() const;
};

AblationResult run_ablation(const AblationConfig& config,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace skelgen
