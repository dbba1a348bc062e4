#include "skelgen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/topology.hpp"

namespace skelgen {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Bone from the parent to each joint: rest world direction and length.
// Direction 0 points down (-y); positive angles turn counter-clockwise.
struct Bone {
  double angle;
  double length;
};

struct Rig {
  std::vector<int> parents;
  std::vector<Bone> bones;
  std::map<std::string, int> index;

  int at(const std::string& name) const { return index.at(name); }
};

double side_sign(const std::string& name) { return name.rfind("left_", 0) == 0 ? 1.0 : -1.0; }

const Rig& rig() {
  static const Rig r = [] {
    Rig out;
    const auto& topo = wholebody62();
    out.parents = wholebody62_parents();
    const double up = kPi;
    const std::map<std::string, Bone> body = {
        {"pelvis", {0.0, 0.0}},        {"hip", {kPi / 2 - 0.55, 0.095}},
        {"spine1", {up, 0.10}},        {"knee", {0.04, 0.22}},
        {"spine2", {up, 0.10}},        {"ankle", {0.0, 0.22}},
        {"spine3", {up, 0.10}},        {"foot", {kPi / 2, 0.05}},
        {"neck", {up, 0.10}},          {"collar", {kPi / 2 + 0.35, 0.06}},
        {"head", {up, 0.12}},          {"shoulder", {kPi / 2, 0.08}},
        {"elbow", {0.0, 0.16}},        {"wrist", {0.0, 0.14}},
    };
    static const double kSegment[] = {0.03, 0.02, 0.015, 0.012};
    static const char* kFingers[] = {"thumb", "index", "middle", "ring", "pinky"};
    for (int j = 0; j < static_cast<int>(topo.joint_names.size()); ++j) {
      const std::string& name = topo.joint_names[static_cast<std::size_t>(j)];
      out.index[name] = j;
      const double s = side_sign(name);
      std::string key = name;
      if (name.rfind("left_", 0) == 0) key = name.substr(5);
      if (name.rfind("right_", 0) == 0) key = name.substr(6);
      if (const auto it = body.find(key); it != body.end()) {
        Bone b = it->second;
        if (name != key) b.angle *= s;
        out.bones.push_back(b);
        continue;
      }
      // Finger joints: "<finger><1|2|3|_tip>".
      int finger = 0;
      for (int f = 0; f < 5; ++f) {
        if (key.rfind(kFingers[f], 0) == 0) finger = f;
      }
      const std::string rest = key.substr(std::string(kFingers[finger]).size());
      const int seg = rest == "_tip" ? 3 : std::stoi(rest) - 1;
      const double spread = s * (static_cast<double>(finger) - 2.0) * 0.3;
      out.bones.push_back({spread, kSegment[seg]});
    }
    return out;
  }();
  return r;
}

struct Named {
  const Rig& r = rig();
  Articulation a;
  Named() { a.angles.assign(r.parents.size(), 0.0); }
  double& operator[](const std::string& name) { return a.angles[static_cast<std::size_t>(r.at(name))]; }
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

MotionParams base_params(Rng& rng) {
  MotionParams p;
  p.amplitude = uniform(rng, 0.0, 1.0);
  p.cycles = uniform(rng, 0.75, 1.5);
  p.phase = uniform(rng, 0.0, 1.0);
  p.rotation = uniform(rng, -0.15, 0.15);
  p.scale = uniform(rng, 0.26, 0.31);
  p.cx = uniform(rng, 0.45, 0.55);
  p.cy = uniform(rng, 0.47, 0.53);
  p.style = uniform(rng, -1.0, 1.0);
  return p;
}

class ArmSwing : public MotionFamily {
 public:
  std::string name() const override { return "arm swing"; }
  MotionParams sample(Rng& rng) const override {
    auto p = base_params(rng);
    p.amplitude = uniform(rng, 0.4, 0.8);
    return p;
  }
  Articulation articulate(const MotionParams& p, double u) const override {
    Named n;
    const double lift = p.amplitude * (1.0 - std::cos(kTwoPi * u));
    n["pelvis"] = p.rotation;
    n["left_elbow"] = lift;
    n["right_elbow"] = -lift;
    n["left_wrist"] = 0.4 * p.style * std::sin(kTwoPi * u);
    n["right_wrist"] = -0.4 * p.style * std::sin(kTwoPi * u);
    return n.a;
  }
};

class Cartwheel : public MotionFamily {
 public:
  std::string name() const override { return "cartwheel"; }
  MotionParams sample(Rng& rng) const override {
    auto p = base_params(rng);
    p.rotation = uniform(rng, -kPi, kPi);
    p.amplitude = uniform(rng, 0.35, 0.6);
    p.scale = uniform(rng, 0.24, 0.27);
    return p;
  }
  Articulation articulate(const MotionParams& p, double u) const override {
    Named n;
    n["pelvis"] = p.rotation + kTwoPi * u;
    n["left_elbow"] = 2.5;
    n["right_elbow"] = -2.5;
    n["left_knee"] = p.amplitude;
    n["right_knee"] = -p.amplitude;
    n["left_wrist"] = 0.2 * p.style * std::sin(kTwoPi * u);
    n["right_wrist"] = 0.2 * p.style * std::sin(kTwoPi * u);
    return n.a;
  }
};

class Jump : public MotionFamily {
 public:
  std::string name() const override { return "jump"; }
  MotionParams sample(Rng& rng) const override {
    auto p = base_params(rng);
    p.amplitude = uniform(rng, 0.12, 0.3);
    p.cy = uniform(rng, 0.52, 0.56);
    return p;
  }
  Articulation articulate(const MotionParams& p, double u) const override {
    Named n;
    const double air = std::abs(std::sin(kPi * u));
    const double crouch = 1.0 - air;
    n["pelvis"] = p.rotation;
    n.a.root_y = p.amplitude * air - 0.06 * crouch;
    n["left_knee"] = 0.25 * crouch;
    n["right_knee"] = -0.25 * crouch;
    n["left_ankle"] = -0.5 * crouch;
    n["right_ankle"] = 0.5 * crouch;
    n["left_elbow"] = 0.4 + (1.6 + 0.3 * p.style) * air;
    n["right_elbow"] = -0.4 - (1.6 + 0.3 * p.style) * air;
    return n.a;
  }
};

class Kick : public MotionFamily {
 public:
  std::string name() const override { return "kick"; }
  MotionParams sample(Rng& rng) const override {
    auto p = base_params(rng);
    p.amplitude = uniform(rng, 0.8, 1.4);
    return p;
  }
  Articulation articulate(const MotionParams& p, double u) const override {
    Named n;
    const double s = std::sin(kPi * u);
    const double k = s * s;
    n["pelvis"] = p.rotation - 0.1 * k;
    n["right_knee"] = -p.amplitude * k;
    n["right_ankle"] = 0.3 * (1.0 + p.style) * std::sin(kTwoPi * u);
    n["left_elbow"] = 0.7 + 0.3 * k;
    n["right_elbow"] = -0.5 - 0.5 * k;
    return n.a;
  }
};

class StaticPose : public MotionFamily {
 public:
  std::string name() const override { return "static pose"; }
  MotionParams sample(Rng& rng) const override {
    auto p = base_params(rng);
    p.amplitude = uniform(rng, 0.2, 1.6);
    return p;
  }
  Articulation articulate(const MotionParams& p, double) const override {
    Named n;
    n["pelvis"] = p.rotation;
    n["left_elbow"] = p.amplitude;
    n["right_elbow"] = -p.amplitude * (1.0 + 0.3 * p.style);
    n["left_wrist"] = 0.3 * p.style;
    n["left_knee"] = 0.1 * p.style;
    return n.a;
  }
};

}  // namespace

std::vector<double> forward_kinematics(const Articulation& a) {
  const Rig& r = rig();
  const std::size_t j_count = r.parents.size();
  if (a.angles.size() != j_count) throw DimensionError("datagen", "articulation has wrong joint count");
  // anim[j]: accumulated joint rotation along the chain from the root.
  std::vector<double> anim(j_count), out(2 * j_count);
  for (std::size_t j = 0; j < j_count; ++j) {
    const int parent = r.parents[j];
    anim[j] = (parent < 0 ? 0.0 : anim[static_cast<std::size_t>(parent)]) + a.angles[j];
    if (parent < 0) {
      out[0] = a.root_x;
      out[1] = a.root_y;
      continue;
    }
    const double dir = r.bones[j].angle + anim[j];
    const double len = r.bones[j].length;
    out[2 * j] = out[2 * static_cast<std::size_t>(parent)] + len * std::sin(dir);
    out[2 * j + 1] = out[2 * static_cast<std::size_t>(parent) + 1] - len * std::cos(dir);
  }
  return out;
}

std::vector<double> MotionFamily::evaluate(const MotionParams& p, double u) const {
  auto xy = forward_kinematics(articulate(p, u));
  for (std::size_t j = 0; j < xy.size() / 2; ++j) {
    xy[2 * j] = p.cx + p.scale * xy[2 * j];
    xy[2 * j + 1] = p.cy - p.scale * xy[2 * j + 1];
  }
  return xy;
}

const std::vector<std::unique_ptr<MotionFamily>>& motion_families() {
  static const auto families = [] {
    std::vector<std::unique_ptr<MotionFamily>> f;
    f.push_back(std::make_unique<ArmSwing>());
    f.push_back(std::make_unique<Cartwheel>());
    f.push_back(std::make_unique<Jump>());
    f.push_back(std::make_unique<Kick>());
    f.push_back(std::make_unique<StaticPose>());
    return f;
  }();
  return families;
}

const MotionFamily& family_by_name(const std::string& name) {
  for (const auto& f : motion_families()) {
    if (f->name() == name) return *f;
  }
  throw InputError("datagen", "unknown motion family '" + name + "'");
}

PoseSequence render_clip(const MotionFamily& family, const MotionParams& params, Index frames) {
  if (frames < 1) throw InputError("datagen", "clip needs at least one frame");
  const Index joints = wholebody62().joints();
  PoseSequence::Coords coords(frames, 2 * joints);
  for (Index t = 0; t < frames; ++t) {
    const double u = params.phase + params.cycles * static_cast<double>(t) / static_cast<double>(frames);
    const auto xy = family.evaluate(params, u);
    for (Index c = 0; c < 2 * joints; ++c) coords(t, c) = std::clamp(xy[static_cast<std::size_t>(c)], 0.0, 1.0);
  }
  return PoseSequence(std::move(coords), joints);
}

std::vector<ClipRecord> generate_dataset(std::size_t n, Index t_min, Index t_max, std::uint64_t seed) {
  if (n < 1) throw InputError("datagen", "clip count must be >= 1");
  if (t_min < 1 || t_max < t_min) throw InputError("datagen", "need 1 <= t_min <= t_max");
  const auto& families = motion_families();
  std::vector<std::optional<ClipRecord>> slots(n);
  parallel_for(n, [&](std::size_t i) {
    const MotionFamily& family = *families[i % families.size()];
    Rng rng(derive_seed(seed, i));
    const auto frames = t_min + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(t_max - t_min + 1)));
    const MotionParams params = family.sample(rng);
    slots[i] = ClipRecord{family.prompt(), 30.0, 512, 512, render_clip(family, params, frames)};
  });
  std::vector<ClipRecord> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw InputError("datagen", "train fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x5b17));
  shuffle(perm, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

Split split(const std::vector<ClipRecord>& corpus, double train_fraction, std::uint64_t seed) {
  const auto [train, test] = split_indices(corpus.size(), train_fraction, seed);
  Split out;
  for (auto i : train) out.train.push_back(corpus[i]);
  for (auto i : test) out.test.push_back(corpus[i]);
  return out;
}

}  // namespace skelgen
