#include "skelgen/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "skelgen/error.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cli", "cannot read '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
  return buf;
}

ArtifactRef artifact(const std::string& path) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(path, ec)) return {path, file_hash(path)};
  return {path, ""};
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["version"] = version;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["config"] = config;
  auto refs = [](const std::vector<ArtifactRef>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& r : v) a.push_back({{"path", r.path}, {"hash", r.hash}});
    return a;
  };
  j["inputs"] = refs(inputs);
  j["outputs"] = refs(outputs);
  j["wall_clock_s"] = wall_clock_s;
  j["status"] = status;
  j["exit_code"] = exit_code;
  if (!error.empty()) j["error"] = error;
  j["metrics"] = metrics;
  return j.dump(2);
}

void RunManifest::write(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cli", "cannot write manifest '" + path + "'");
  f << to_json() << "\n";
}

}  // namespace skelgen
