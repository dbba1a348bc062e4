#include "skelgen/feature_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "skelgen/error.hpp"

namespace skelgen::alf {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kMagic[8] = {'S', 'K', 'F', 'E', 'A', 'T', 0, 0};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kModule = "alf-kernel";

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (data.size() - pos < sizeof(T)) throw FormatError(kModule, "feature file truncated");
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

void write_feature_stack(const std::string& path, const FeatureStack<double>& stack,
                         FeatureDtype dtype) {
  const Index n = stack.patches(), depth = stack.depth(), d = stack.channels();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(n));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(depth));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < n; ++i) {
    for (Index l = 0; l < depth; ++l) {
      for (Index c = 0; c < d; ++c) {
        const double v = stack.layers[static_cast<std::size_t>(l)](i, c);
        if (dtype == FeatureDtype::kF32) {
          put<float>(out, static_cast<float>(v));
        } else {
          put<double>(out, v);
        }
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(kModule, "cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(kModule, "write failed for '" + path + "'");
}

FeatureStack<double> read_feature_stack(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(kModule, "cannot open '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(kModule, "'" + path + "' is not a feature file (bad magic)");
  }
  Reader r{data, sizeof(kMagic)};
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw VersionError(kModule, "unsupported feature file version " + std::to_string(version));
  }
  const auto dtype = r.get<std::uint32_t>();
  if (dtype != 1 && dtype != 2) throw FormatError(kModule, "unknown dtype " + std::to_string(dtype));
  const auto n = r.get<std::uint64_t>();
  const auto depth = r.get<std::uint64_t>();
  const auto d = r.get<std::uint64_t>();
  if (depth < 1) throw FormatError(kModule, "feature file has zero layers");
  const std::uint64_t width = dtype == 1 ? 4 : 8;
  if ((data.size() - r.pos) != n * depth * d * width) {
    throw FormatError(kModule, "feature payload size does not match header");
  }
  FeatureStack<double> stack;
  for (std::uint64_t l = 0; l < depth; ++l) {
    stack.layers.emplace_back(static_cast<Index>(n), static_cast<Index>(d));
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t l = 0; l < depth; ++l) {
      for (std::uint64_t c = 0; c < d; ++c) {
        const double v = dtype == 1 ? static_cast<double>(r.get<float>()) : r.get<double>();
        if (!std::isfinite(v)) throw FormatError(kModule, "non-finite value in feature file");
        stack.layers[l](static_cast<Index>(i), static_cast<Index>(c)) = v;
      }
    }
  }
  return stack;
}

}  // namespace skelgen::alf
