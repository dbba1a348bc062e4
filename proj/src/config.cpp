#include "skelgen/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "skelgen/error.hpp"
#include "skelgen/text_encoder.hpp"

namespace skelgen {

namespace {

constexpr const char* kModule = "cli";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t common_suffix(const std::string& a, const std::string& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[a.size() - 1 - n] == b[b.size() - 1 - n]) ++n;
  return n;
}

}  // namespace

const std::vector<ConfigKey>& default_schema() {
  static const std::vector<ConfigKey> schema = {
      {"data", "n", "2000", "number of clips"},
      {"data", "t_min", "16", "shortest clip in frames"},
      {"data", "t_max", "48", "longest clip in frames"},
      {"data", "train_fraction", "0.9", "share of clips in the train split"},
      {"data", "seed", "7", "generator seed"},
      {"model", "d_model", "256", "hidden width"},
      {"model", "layers", "18", "decoder blocks"},
      {"model", "heads", "8", "attention heads"},
      {"model", "bins", "256", "quantization bins K"},
      {"model", "max_frames", "48", "longest sequence in frames"},
      {"model", "text_buckets", "4096", "hashed prompt vocabulary"},
      {"model", "text_width", "256", "prompt embedding width"},
      {"model", "max_prompt_tokens", "32", "prompt length cap including terminator"},
      {"model", "train_text_table", "true", "update the prompt embedding table"},
      {"train", "lr", "1e-4", "learning rate"},
      {"train", "weight_decay", "0.01", "decoupled weight decay"},
      {"train", "beta1", "0.9", "Adam first-moment decay"},
      {"train", "beta2", "0.95", "Adam second-moment decay"},
      {"train", "eps", "1e-8", "Adam epsilon"},
      {"train", "batch_size", "8", "sequences per step"},
      {"train", "steps", "1000", "optimizer steps"},
      {"train", "eval_interval", "100", "steps between held-out evaluations"},
      {"train", "clip_norm", "0", "global gradient-norm clip, 0 disables"},
      {"train", "seed", "0", "initialization and batching seed"},
      {"sample", "strategy", "topk", "greedy, topk or nucleus"},
      {"sample", "k", "10", "top-k cutoff"},
      {"sample", "p", "0.9", "nucleus mass"},
      {"sample", "temperature", "1.0", "logit temperature"},
      {"sample", "max_body_tokens", "0", "generation cap, 0 means the model maximum"},
      {"sample", "seed", "0", "sampling seed"},
      {"augment", "sigma", "3.0", "jitter std in pixels"},
      {"augment", "dropout", "0.05", "per-joint dropout probability"},
      {"augment", "jitter", "true", "enable jitter"},
      {"augment", "drop", "true", "enable dropout"},
      {"augment", "shift", "true", "enable temporal shift"},
      {"augment", "seed", "0", "augmentation seed"},
      {"render", "width", "512", "frame width"},
      {"render", "height", "512", "frame height"},
      {"render", "radius", "3", "joint disc radius"},
      {"render", "thickness", "2", "bone thickness"},
      {"render", "fps", "30", "frame rate recorded in the manifest"},
      {"eval", "provider", "random64", "embedding provider"},
      {"eval", "pool", "32", "R-precision pool size"},
      {"eval", "diversity_pairs", "300", "pairs sampled for diversity"},
      {"eval", "seed", "0", "metric sampling seed"},
      {"ablate", "clips", "40", "desk corpus size"},
      {"ablate", "steps", "400", "training steps per grid cell"},
      {"ablate", "d_model", "32", "hidden width of every grid model"},
      {"ablate", "lr", "1e-3", "learning rate of every grid model"},
      {"ablate", "seeds", "5", "sampling seeds per strategy"},
      {"ablate", "samples_per_prompt", "4", "samples per family prompt and seed"},
      {"ablate", "provider", "proto64", "embedding provider"},
      {"ablate", "seed", "0", "harness seed"},
  };
  return schema;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string closest_match(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = 0, best_s = 0;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(word, c);
    const std::size_t s = common_suffix(word, c);
    if (best.empty() || d < best_d || (d == best_d && s > best_s)) {
      best = c;
      best_d = d;
      best_s = s;
    }
  }
  return best;
}

ConfigStore::ConfigStore(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
  for (const auto& k : schema_) values_[k.section + "." + k.name] = k.default_value;
}

const ConfigKey& ConfigStore::key(const std::string& section, const std::string& name) const {
  std::vector<std::string> in_section, all;
  for (const auto& k : schema_) {
    if (k.section == section && k.name == name) return k;
    if (k.section == section) in_section.push_back(k.name);
    all.push_back(k.section + "." + k.name);
  }
  const bool known_section = !in_section.empty();
  const std::string hint = known_section ? closest_match(name, in_section)
                                         : closest_match(section + "." + name, all);
  std::string msg = "unknown key '" + (known_section ? name : section + "." + name) + "'";
  if (known_section) msg += " in [" + section + "]";
  if (!hint.empty()) msg += "; did you mean '" + hint + "'?";
  throw ConfigError(kModule, msg);
}

void ConfigStore::load_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(kModule, where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(kModule, where + ": expected 'key = value'");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (name.empty()) throw ConfigError(kModule, where + ": empty key");
    if (section.empty()) throw ConfigError(kModule, where + ": key '" + name + "' outside any [section]");
    try {
      set(section, name, value);
    } catch (const ConfigError& e) {
      throw ConfigError(kModule, where + ": " + e.what());
    }
  }
}

void ConfigStore::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(kModule, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  load_text(buf.str(), path);
}

void ConfigStore::set(const std::string& section, const std::string& name, const std::string& value) {
  key(section, name);
  values_[section + "." + name] = value;
}

std::string ConfigStore::get(const std::string& section, const std::string& name) const {
  key(section, name);
  return values_.at(section + "." + name);
}

double ConfigStore::get_double(const std::string& section, const std::string& name) const {
  const std::string v = get(section, name);
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(kModule, section + "." + name + " = '" + v + "' is not a number");
  }
  return d;
}

long ConfigStore::get_int(const std::string& section, const std::string& name) const {
  const std::string v = get(section, name);
  errno = 0;
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(kModule, section + "." + name + " = '" + v + "' is not an integer");
  }
  return n;
}

bool ConfigStore::get_bool(const std::string& section, const std::string& name) const {
  const std::string v = get(section, name);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(kModule, section + "." + name + " = '" + v + "' is not a boolean");
}

std::string ConfigStore::canonical() const {
  std::string out;
  for (const auto& k : schema_) {
    const std::string full = k.section + "." + k.name;
    out += full + "=" + values_.at(full) + "\n";
  }
  return out;
}

std::string ConfigStore::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

std::map<std::string, std::string> ConfigStore::values() const { return values_; }

}  // namespace skelgen
