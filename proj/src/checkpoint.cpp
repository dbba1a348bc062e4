#include "skelgen/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "skelgen/error.hpp"

namespace skelgen {

using nlohmann::json;

namespace {

nlohmann::json model_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"layers", c.layers},
          {"heads", c.heads},
          {"bins", c.bins},
          {"joints", c.joints},
          {"max_frames", c.max_frames},
          {"text_buckets", c.text_buckets},
          {"text_width", c.text_width},
          {"max_prompt_tokens", c.max_prompt_tokens},
          {"train_text_table", c.train_text_table}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.bins = j.at("bins");
  c.joints = j.at("joints");
  c.max_frames = j.at("max_frames");
  c.text_buckets = j.at("text_buckets");
  c.text_width = j.at("text_width");
  c.max_prompt_tokens = j.at("max_prompt_tokens");
  c.train_text_table = j.at("train_text_table");
  c.validate();
  return c;
}

nlohmann::json train_json(const TrainConfig& c) {
  return {{"lr", c.lr},       {"weight_decay", c.weight_decay}, {"beta1", c.beta1},
          {"beta2", c.beta2}, {"eps", c.eps},                   {"batch_size", c.batch_size},
          {"steps", c.steps}, {"seed", c.seed},                 {"eval_interval", c.eval_interval},
          {"clip_norm", c.clip_norm}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr");
  c.weight_decay = j.at("weight_decay");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.eps = j.at("eps");
  c.batch_size = j.at("batch_size");
  c.steps = j.at("steps");
  c.seed = j.at("seed");
  c.eval_interval = j.at("eval_interval");
  c.clip_norm = j.at("clip_norm");
  return c;
}

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("trainer", "checkpoint is truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

void put_blob(std::ostream& out, const std::string& name, const Mat<float>& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, 1);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) put<float>(out, m.data()[i]);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return model_json(config).dump(); }
ModelConfig model_config_from_json(const std::string& text) { return model_from(json::parse(text)); }
std::string train_config_to_json(const TrainConfig& config) { return train_json(config).dump(); }
TrainConfig train_config_from_json(const std::string& text) { return train_from(json::parse(text)); }

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header =
      json{{"model", model_json(ck.model)}, {"train", train_json(ck.train)}, {"step", ck.optimizer.step}}
          .dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::uint32_t count = 0;
  ck.params.for_each([&](const std::string&, const Mat<float>&) { count += 3; });
  put<std::uint32_t>(out, count);
  ck.params.for_each([&](const std::string& name, const Mat<float>& m) { put_blob(out, name, m); });
  ck.optimizer.m.for_each([&](const std::string& name, const Mat<float>& m) { put_blob(out, "adam.m/" + name, m); });
  ck.optimizer.v.for_each([&](const std::string& name, const Mat<float>& m) { put_blob(out, "adam.v/" + name, m); });

  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("trainer", "cannot write checkpoint '" + path + "'");
    const std::string data = out.str();
    file.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!file) throw IoError("trainer", "short write to checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("trainer", "cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("trainer", "cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << file.rdbuf();
  Reader in(ss.str());

  if (in.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw FormatError("trainer", "'" + path + "' is not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("trainer", "checkpoint version " + std::to_string(version) +
                                      " is not supported (expected " +
                                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  try {
    const json header = json::parse(in.bytes(in.get<std::uint32_t>()));
    ck.model = model_from(header.at("model"));
    ck.train = train_from(header.at("train"));
    ck.optimizer.step = header.at("step").get<long>();
  } catch (const json::exception& e) {
    throw FormatError("trainer", std::string("malformed checkpoint header: ") + e.what());
  }

  std::map<std::string, Mat<float>> blobs;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.bytes(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint8_t>();
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    Mat<float> m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index k = 0; k < m.size(); ++k) {
      if (dtype == 1) {
        m.data()[k] = in.get<float>();
      } else if (dtype == 2) {
        m.data()[k] = static_cast<float>(in.get<double>());
      } else {
        throw FormatError("trainer", "blob '" + name + "' has unknown dtype");
      }
    }
    blobs[std::move(name)] = std::move(m);
  }
  if (!in.done()) throw FormatError("trainer", "trailing bytes after checkpoint blobs");

  ck.params = ModelParams<float>::zeros(ck.model);
  ck.optimizer.m = ModelParams<float>::zeros(ck.model);
  ck.optimizer.v = ModelParams<float>::zeros(ck.model);
  auto fill = [&](const std::string& prefix) {
    return [&, prefix](const std::string& name, Mat<float>& m) {
      const auto it = blobs.find(prefix + name);
      if (it == blobs.end()) throw FormatError("trainer", "checkpoint is missing '" + prefix + name + "'");
      if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
        throw FormatError("trainer", "checkpoint blob '" + prefix + name + "' has the wrong shape");
      }
      m = std::move(it->second);
    };
  };
  ck.params.for_each(fill(""));
  ck.optimizer.m.for_each(fill("adam.m/"));
  ck.optimizer.v.for_each(fill("adam.v/"));
  return ck;
}

}  // namespace skelgen
