#pragma once

#include <string>

#include "skelgen/alf.hpp"

namespace skelgen::alf {

// Binary feature-stack file, little-endian:
//   "SKFEAT\0\0" | u32 version=1 | u32 dtype (1=f32, 2=f64) | u64 N | u64 L | u64 d
//   | N*L*d values in [patch][layer][channel] order.
enum class FeatureDtype : std::uint32_t { kF32 = 1, kF64 = 2 };

void write_feature_stack(const std::string& path, const FeatureStack<double>& stack,
                         FeatureDtype dtype = FeatureDtype::kF64);
// Throws IoError, FormatError or VersionError.
FeatureStack<double> read_feature_stack(const std::string& path);

}  // namespace skelgen::alf
