#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace skelgen {

inline constexpr const char* kVersion = "0.1.0";

struct ArtifactRef {
  std::string path;
  std::string hash;  // FNV-1a 64 of the file bytes, hex; empty for directories
};

// One per CLI run, written on success and on failure.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_hash;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
  double wall_clock_s = 0.0;
  std::string status = "ok";  // "ok" or "error"
  int exit_code = 0;
  std::string error;
  std::map<std::string, double> metrics;

  std::string to_json() const;
  void write(const std::string& path) const;
};

// Hex FNV-1a 64 of a file's bytes; throws IoError if unreadable.
std::string file_hash(const std::string& path);
// Hash for a file, or empty for a directory or missing path.
ArtifactRef artifact(const std::string& path);

}  // namespace skelgen
