#pragma once

#include <cstdint>
#include <string>

#include "skelgen/model.hpp"
#include "skelgen/trainer.hpp"

namespace skelgen {

// Container layout (all integers little-endian):
//   magic "SKGNCKPT" | u32 version | u32 n | n bytes of JSON header
//   u32 blob count | blobs...
// blob: u32 name length | name | u8 dtype (1 = f32, 2 = f64) | u64 rows |
//   u64 cols | rows*cols IEEE-754 values, row-major.
// The JSON header carries the model config, train config and optimizer step.
inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'G', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParams<float> params;
  AdamState optimizer;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws IoError, FormatError (bad magic, truncation, malformed header or
// blob) or VersionError. Nothing is returned unless the whole file parsed.
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace skelgen
