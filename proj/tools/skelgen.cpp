// skelgen: data generation, training, sampling, rendering, augmentation,
// evaluation and the ablation grid behind one binary.
//
// Exit codes: 0 success, 1 structured domain error, 2 usage error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skelgen/ablation.hpp"
#include "skelgen/augment.hpp"
#include "skelgen/checkpoint.hpp"
#include "skelgen/config.hpp"
#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/manifest.hpp"
#include "skelgen/metrics.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/pose_io.hpp"
#include "skelgen/raster.hpp"
#include "skelgen/sampler.hpp"
#include "skelgen/trainer.hpp"

namespace fs = std::filesystem;
using namespace skelgen;

namespace {

enum class Level { kDebug, kInfo, kWarn, kError };

// One key=value line per event on stderr.
class Logger {
 public:
  Level threshold = Level::kInfo;

  void log(Level level, const std::string& event,
           const std::vector<std::pair<std::string, std::string>>& fields = {}) const {
    if (level < threshold) return;
    static const char* kNames[] = {"debug", "info", "warn", "error"};
    std::ostringstream line;
    line << "level=" << kNames[static_cast<int>(level)] << " event=" << event;
    for (const auto& [k, v] : fields) line << ' ' << k << '=' << quote(v);
    std::cerr << line.str() << '\n';
  }

 private:
  static std::string quote(const std::string& v) {
    if (!v.empty() && v.find_first_of(" \t\"=") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// A CLI flag bound to a config key; applied on top of the config file.
struct Binding {
  CLI::Option* option;
  std::string section, name;
  std::shared_ptr<std::string> value;
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<Binding> bindings;
  std::string seed_section;

  void bind(const std::string& section, const std::string& name, const std::string& flag = "") {
    auto value = std::make_shared<std::string>();
    std::string f = flag;
    if (f.empty()) {
      f = "--" + name;
      for (auto& c : f) {
        if (c == '_') c = '-';
      }
    }
    std::string help;
    for (const auto& k : default_schema()) {
      if (k.section == section && k.name == name) help = k.help + " (default " + k.default_value + ")";
    }
    auto* opt = app->add_option(f, *value, help);
    bindings.push_back({opt, section, name, value});
  }
  void bind_section(const std::string& section, const std::vector<std::string>& skip = {}) {
    for (const auto& k : default_schema()) {
      if (k.section != section) continue;
      if (std::find(skip.begin(), skip.end(), k.name) != skip.end()) continue;
      bind(section, k.name);
    }
  }
};

struct Globals {
  int threads = 0;
  bool quiet = false;
  bool verbose = false;
  std::string config_path;
  std::string manifest_path;
};

std::string manifest_for(const std::string& output, bool is_dir) {
  return is_dir ? (fs::path(output) / "manifest.json").string() : output + ".manifest.json";
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

ModelConfig model_from(const ConfigStore& c, int joints) {
  ModelConfig m;
  m.d_model = static_cast<int>(c.get_int("model", "d_model"));
  m.layers = static_cast<int>(c.get_int("model", "layers"));
  m.heads = static_cast<int>(c.get_int("model", "heads"));
  m.bins = static_cast<int>(c.get_int("model", "bins"));
  m.max_frames = static_cast<int>(c.get_int("model", "max_frames"));
  m.text_buckets = static_cast<int>(c.get_int("model", "text_buckets"));
  m.text_width = static_cast<int>(c.get_int("model", "text_width"));
  m.max_prompt_tokens = static_cast<int>(c.get_int("model", "max_prompt_tokens"));
  m.train_text_table = c.get_bool("model", "train_text_table");
  m.joints = joints;
  m.validate();
  return m;
}

TrainConfig train_from(const ConfigStore& c) {
  TrainConfig t;
  t.lr = c.get_double("train", "lr");
  t.weight_decay = c.get_double("train", "weight_decay");
  t.beta1 = c.get_double("train", "beta1");
  t.beta2 = c.get_double("train", "beta2");
  t.eps = c.get_double("train", "eps");
  t.batch_size = static_cast<int>(c.get_int("train", "batch_size"));
  t.steps = c.get_int("train", "steps");
  t.eval_interval = c.get_int("train", "eval_interval");
  t.clip_norm = c.get_double("train", "clip_norm");
  t.seed = static_cast<std::uint64_t>(c.get_int("train", "seed"));
  t.validate();
  return t;
}

std::uint64_t seed_of(const ConfigStore& c, const std::string& section) {
  return static_cast<std::uint64_t>(c.get_int(section, "seed"));
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string out;
};

void run_gen_data(const ConfigStore& c, const GenDataArgs& a, RunManifest& m, const Logger& log) {
  const auto n = c.get_int("data", "n");
  if (n < 1) throw ConfigError("cli", "data.n must be >= 1");
  const auto seed = seed_of(c, "data");
  m.seed = seed;
  const auto corpus = generate_dataset(static_cast<std::size_t>(n), c.get_int("data", "t_min"),
                                       c.get_int("data", "t_max"), seed);
  const auto parts = split(corpus, c.get_double("data", "train_fraction"), seed);
  fs::create_directories(a.out);
  const std::string dir = a.out;
  const auto corpus_path = (fs::path(dir) / "corpus.jsonl").string();
  const auto train_path = (fs::path(dir) / "train.jsonl").string();
  const auto test_path = (fs::path(dir) / "test.jsonl").string();
  const auto topo_path = (fs::path(dir) / "topology.json").string();
  write_clips(corpus_path, corpus);
  write_clips(train_path, parts.train);
  write_clips(test_path, parts.test);
  write_topology(topo_path, wholebody62());
  for (const auto& p : {corpus_path, train_path, test_path, topo_path}) m.outputs.push_back(artifact(p));
  m.metrics["clips"] = static_cast<double>(corpus.size());
  m.metrics["train"] = static_cast<double>(parts.train.size());
  m.metrics["test"] = static_cast<double>(parts.test.size());
  log.log(Level::kInfo, "gen-data.done",
          {{"clips", std::to_string(corpus.size())}, {"train", std::to_string(parts.train.size())},
           {"test", std::to_string(parts.test.size())}, {"out", dir}});
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, eval_data, out, resume;
};

void run_train(const ConfigStore& c, const TrainArgs& a, RunManifest& m, const Logger& log) {
  const auto clips = read_clips(a.data);
  m.inputs.push_back(artifact(a.data));
  if (clips.empty()) throw InputError("trainer", "training file '" + a.data + "' has no clips");
  const int joints = static_cast<int>(clips.front().pose.joints());

  Checkpoint ck;
  ck.train = train_from(c);
  if (!a.resume.empty()) {
    m.inputs.push_back(artifact(a.resume));
    Checkpoint prev = load_checkpoint(a.resume);
    ck.model = prev.model;
    ck.params = std::move(prev.params);
    ck.optimizer = std::move(prev.optimizer);
    log.log(Level::kInfo, "train.resume", {{"from", a.resume}, {"step", std::to_string(ck.optimizer.step)}});
  } else {
    ck.model = model_from(c, joints);
    ck.params = ModelParams<float>::init(ck.model, ck.train.seed);
    ck.optimizer = AdamState::zeros(ck.model);
  }
  if (ck.model.joints != joints) {
    throw DimensionError("trainer", "data has J=" + std::to_string(joints) + " but the model expects J=" +
                                        std::to_string(ck.model.joints));
  }
  m.seed = ck.train.seed;
  const PromptTokenizer tokenizer(ck.model.text_buckets, ck.model.max_prompt_tokens);
  const Vocabulary vocab(ck.model.bins);
  const auto train_set = make_examples(clips, tokenizer, vocab);
  std::vector<TrainExample> eval_set;
  if (!a.eval_data.empty()) {
    m.inputs.push_back(artifact(a.eval_data));
    eval_set = make_examples(read_clips(a.eval_data), tokenizer, vocab);
  }
  log.log(Level::kInfo, "train.start",
          {{"params", std::to_string(ck.params.count())}, {"examples", std::to_string(train_set.size())},
           {"steps", std::to_string(ck.train.steps)}, {"from_step", std::to_string(ck.optimizer.step)}});

  double window = 0.0, last = 0.0;
  long in_window = 0;
  const auto t0 = std::chrono::steady_clock::now();
  train(ck.params, ck.optimizer, ck.model, ck.train, train_set, ck.train.steps,
        [&](long step, const StepResult& r) {
          window += r.loss;
          ++in_window;
          last = r.loss;
          log.log(Level::kDebug, "train.step",
                  {{"step", std::to_string(step)}, {"loss", num(r.loss)}, {"grad_norm", num(r.grad_norm)}});
          if ((step + 1) % ck.train.eval_interval == 0 || step + 1 == ck.train.steps) {
            std::vector<std::pair<std::string, std::string>> f = {
                {"step", std::to_string(step + 1)},
                {"train_loss", num(window / static_cast<double>(in_window))},
                {"elapsed_s", num(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())}};
            if (!eval_set.empty()) f.emplace_back("eval_loss", num(evaluate_loss(ck.params, ck.model, eval_set)));
            log.log(Level::kInfo, "train.progress", f);
            window = 0.0;
            in_window = 0;
          }
        });
  ensure_parent(a.out);
  save_checkpoint(a.out, ck);
  m.outputs.push_back(artifact(a.out));
  m.metrics["final_loss"] = last;
  m.metrics["steps"] = static_cast<double>(ck.optimizer.step);
  if (!eval_set.empty()) m.metrics["eval_loss"] = evaluate_loss(ck.params, ck.model, eval_set);
  log.log(Level::kInfo, "train.done", {{"checkpoint", a.out}, {"final_loss", num(last)}});
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint, prompts_file, out;
  std::vector<std::string> prompts;
  int count = 1;
};

void run_generate(const ConfigStore& c, const GenerateArgs& a, RunManifest& m, const Logger& log) {
  if (!fs::exists(a.checkpoint)) {
    throw IoError("sampler", "checkpoint not found: '" + a.checkpoint + "'");
  }
  m.inputs.push_back(artifact(a.checkpoint));
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  std::vector<std::string> prompts = a.prompts;
  if (!a.prompts_file.empty()) {
    std::ifstream f(a.prompts_file);
    if (!f) throw IoError("sampler", "cannot open prompts file '" + a.prompts_file + "'");
    m.inputs.push_back(artifact(a.prompts_file));
    for (std::string line; std::getline(f, line);) {
      if (!line.empty()) prompts.push_back(line);
    }
  }
  if (prompts.empty()) throw InputError("sampler", "no prompts given (use --prompt or --prompts)");
  if (a.count < 1) throw InputError("sampler", "--count must be >= 1");

  DecodeConfig d;
  d.strategy = parse_strategy(c.get("sample", "strategy"));
  d.k = static_cast<int>(c.get_int("sample", "k"));
  d.p = c.get_double("sample", "p");
  d.temperature = c.get_double("sample", "temperature");
  d.max_body_tokens = static_cast<int>(c.get_int("sample", "max_body_tokens"));
  d.validate();
  const auto seed = seed_of(c, "sample");
  m.seed = seed;

  std::vector<std::string> jobs;
  for (const auto& p : prompts) {
    for (int i = 0; i < a.count; ++i) jobs.push_back(p);
  }
  const PromptTokenizer tokenizer(ck.model.text_buckets, ck.model.max_prompt_tokens);
  const Vocabulary vocab(ck.model.bins);
  std::vector<std::optional<ClipRecord>> out(jobs.size());
  std::vector<std::uint8_t> truncated(jobs.size(), 0);
  parallel_for(jobs.size(), [&](std::size_t i) {
    DecodeConfig di = d;
    di.seed = derive_seed(seed, i);
    const auto stream = sample_sequence(jobs[i], ck.params, ck.model, tokenizer, di);
    truncated[i] = stream.truncated;
    try {
      auto fin = finalize_pose(stream, ck.model.joints, vocab);
      out[i] = ClipRecord{jobs[i], 30.0, 512, 512, std::move(fin.pose)};
    } catch (const EmptyMotionError&) {
    }
  });
  std::vector<ClipRecord> kept;
  long empty = 0, n_trunc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    n_trunc += truncated[i];
    if (out[i]) {
      kept.push_back(std::move(*out[i]));
    } else {
      ++empty;
      log.log(Level::kWarn, "generate.empty", {{"index", std::to_string(i)}, {"prompt", jobs[i]}});
    }
  }
  ensure_parent(a.out);
  write_clips(a.out, kept);
  m.outputs.push_back(artifact(a.out));
  m.metrics["samples"] = static_cast<double>(kept.size());
  m.metrics["empty"] = static_cast<double>(empty);
  m.metrics["truncated"] = static_cast<double>(n_trunc);
  log.log(Level::kInfo, "generate.done",
          {{"samples", std::to_string(kept.size())}, {"empty", std::to_string(empty)},
           {"truncated", std::to_string(n_trunc)}, {"out", a.out}});
}

// ---- render ---------------------------------------------------------------

struct RenderArgs {
  std::string poses, out, topology;
  int index = -1;
};

void run_render(const ConfigStore& c, const RenderArgs& a, RunManifest& m, const Logger& log) {
  const auto clips = read_clips(a.poses);
  m.inputs.push_back(artifact(a.poses));
  SkeletonTopology topo = wholebody62();
  if (!a.topology.empty()) {
    topo = read_topology(a.topology);
    m.inputs.push_back(artifact(a.topology));
  }
  RasterConfig rc;
  rc.width = static_cast<int>(c.get_int("render", "width"));
  rc.height = static_cast<int>(c.get_int("render", "height"));
  rc.joint_radius = static_cast<int>(c.get_int("render", "radius"));
  rc.thickness = static_cast<int>(c.get_int("render", "thickness"));
  rc.fps = c.get_double("render", "fps");
  rc.validate();
  std::size_t first = 0, last = clips.size();
  if (a.index >= 0) {
    if (static_cast<std::size_t>(a.index) >= clips.size()) {
      throw InputError("raster", "--index " + std::to_string(a.index) + " but the file has " +
                                     std::to_string(clips.size()) + " clips");
    }
    first = static_cast<std::size_t>(a.index);
    last = first + 1;
  }
  long frames = 0;
  for (std::size_t i = first; i < last; ++i) {
    if (clips[i].pose.joints() != topo.joints()) {
      throw DimensionError("raster", "clip " + std::to_string(i) + " has J=" +
                                         std::to_string(clips[i].pose.joints()) + " but the topology has " +
                                         std::to_string(topo.joints()));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%05zu", i);
    const auto dir = (fs::path(a.out) / name).string();
    const auto video = rasterize_video(clips[i].pose, topo, rc);
    write_video(dir, video);
    frames += static_cast<long>(video.frames.size());
    m.outputs.push_back({dir, ""});
  }
  m.metrics["clips"] = static_cast<double>(last - first);
  m.metrics["frames"] = static_cast<double>(frames);
  log.log(Level::kInfo, "render.done",
          {{"clips", std::to_string(last - first)}, {"frames", std::to_string(frames)}, {"out", a.out}});
}

// ---- augment --------------------------------------------------------------

struct AugmentArgs {
  std::string in, out;
};

void run_augment(const ConfigStore& c, const AugmentArgs& a, RunManifest& m, const Logger& log) {
  auto clips = read_clips(a.in);
  m.inputs.push_back(artifact(a.in));
  AugmentConfig base;
  base.sigma_pixels = c.get_double("augment", "sigma");
  base.dropout = c.get_double("augment", "dropout");
  base.jitter_enabled = c.get_bool("augment", "jitter");
  base.dropout_enabled = c.get_bool("augment", "drop");
  base.shift_enabled = c.get_bool("augment", "shift");
  base.seed = seed_of(c, "augment");
  m.seed = base.seed;
  parallel_for(clips.size(), [&](std::size_t i) {
    AugmentConfig ac = base;
    ac.width = clips[i].width;
    ac.height = clips[i].height;
    ac.seed = derive_seed(base.seed, i);
    ac.validate();
    clips[i].pose = compose(clips[i].pose, ac);
  });
  ensure_parent(a.out);
  write_clips(a.out, clips);
  m.outputs.push_back(artifact(a.out));
  m.metrics["clips"] = static_cast<double>(clips.size());
  log.log(Level::kInfo, "augment.done", {{"clips", std::to_string(clips.size())}, {"out", a.out}});
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string real, gen, report;
};

void run_evaluate(const ConfigStore& c, const EvaluateArgs& a, RunManifest& m, const Logger& log) {
  const auto real = read_clips(a.real);
  const auto gen = read_clips(a.gen);
  m.inputs.push_back(artifact(a.real));
  m.inputs.push_back(artifact(a.gen));
  if (real.empty()) throw InputError("metrics", "'" + a.real + "' has no clips");
  const auto provider = make_provider(c.get("eval", "provider"), real.front().pose.joints(), real);
  EvalOptions opt;
  opt.pool = static_cast<int>(c.get_int("eval", "pool"));
  opt.diversity_pairs = c.get_int("eval", "diversity_pairs");
  opt.seed = seed_of(c, "eval");
  m.seed = opt.seed;
  if (static_cast<long>(gen.size()) < opt.pool) {
    log.log(Level::kWarn, "evaluate.pool_shrunk",
            {{"requested", std::to_string(opt.pool)}, {"used", std::to_string(gen.size())}});
  }
  const auto r = evaluate(real, gen, *provider, opt);
  ensure_parent(a.report);
  std::ofstream f(a.report);
  if (!f) throw IoError("metrics", "cannot write report '" + a.report + "'");
  f << r.to_json() << "\n";
  f.close();
  m.outputs.push_back(artifact(a.report));
  m.metrics = {{"fid", r.fid}, {"rp@1", r.rp1}, {"rp@2", r.rp2}, {"rp@3", r.rp3},
               {"diversity", r.diversity}, {"mm_dist", r.mm_dist}};
  log.log(Level::kInfo, "evaluate.done",
          {{"provider", r.provider}, {"fid", num(r.fid)}, {"rp1", num(r.rp1)}, {"rp3", num(r.rp3)},
           {"diversity", num(r.diversity)}, {"mm_dist", num(r.mm_dist)}});
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string out;
};

void run_ablate(const ConfigStore& c, const AblateArgs& a, RunManifest& m, const Logger& log) {
  AblationConfig ac;
  ac.clips = static_cast<std::size_t>(c.get_int("ablate", "clips"));
  ac.steps = c.get_int("ablate", "steps");
  ac.d_model = static_cast<int>(c.get_int("ablate", "d_model"));
  ac.text_width = ac.d_model;
  ac.lr = c.get_double("ablate", "lr");
  ac.seeds = static_cast<int>(c.get_int("ablate", "seeds"));
  ac.samples_per_prompt = static_cast<int>(c.get_int("ablate", "samples_per_prompt"));
  ac.provider = c.get("ablate", "provider");
  ac.seed = seed_of(c, "ablate");
  m.seed = ac.seed;
  const auto result = run_ablation(ac, [&](const std::string& s) { log.log(Level::kInfo, "ablate.progress", {{"detail", s}}); });
  fs::create_directories(a.out);
  const auto table = (fs::path(a.out) / "ablation.md").string();
  const auto json = (fs::path(a.out) / "ablation.json").string();
  {
    std::ofstream f(table);
    f << result.table();
  }
  {
    std::ofstream f(json);
    f << result.to_json() << "\n";
  }
  m.outputs.push_back(artifact(table));
  m.outputs.push_back(artifact(json));
  m.metrics["diversity_ordered"] = result.diversity_ordered() ? 1.0 : 0.0;
  std::cout << result.table();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skelgen: text-conditioned 2D skeleton sequence generation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Globals g;
  app.add_option("--threads", g.threads, "Cap on worker threads (0 = hardware concurrency)");
  app.add_flag("-q,--quiet", g.quiet, "Only log warnings and errors");
  app.add_flag("-v,--verbose", g.verbose, "Log per-step detail");
  app.add_option("--config", g.config_path, "Config file ([section] key = value)");
  app.add_option("--manifest", g.manifest_path, "Where to write the run manifest");

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    return c;
  };

  GenDataArgs gen_data;
  auto& c_gen = add("gen-data", "Generate a procedural text-pose corpus");
  c_gen.bind_section("data");
  c_gen.app->add_option("--out", gen_data.out, "Output directory")->required();

  TrainArgs train_args;
  auto& c_train = add("train", "Train the decoder on a JSON-lines corpus");
  c_train.bind_section("model");
  c_train.bind_section("train");
  c_train.app->add_option("--data", train_args.data, "Training clips (.jsonl)")->required();
  c_train.app->add_option("--eval-data", train_args.eval_data, "Held-out clips (.jsonl)");
  c_train.app->add_option("--out", train_args.out, "Checkpoint path")->required();
  c_train.app->add_option("--resume", train_args.resume, "Continue from this checkpoint");

  GenerateArgs gen_args;
  auto& c_generate = add("generate", "Sample pose sequences from a checkpoint");
  c_generate.bind_section("sample");
  c_generate.app->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint path")->required();
  c_generate.app->add_option("--prompt", gen_args.prompts, "Prompt (repeatable)");
  c_generate.app->add_option("--prompts", gen_args.prompts_file, "File with one prompt per line");
  c_generate.app->add_option("--count", gen_args.count, "Samples per prompt");
  c_generate.app->add_option("--out", gen_args.out, "Output clips (.jsonl)")->required();

  RenderArgs render_args;
  auto& c_render = add("render", "Rasterize clips to PPM frame sequences");
  c_render.bind_section("render");
  c_render.app->add_option("--poses", render_args.poses, "Clips (.jsonl)")->required();
  c_render.app->add_option("--out", render_args.out, "Output directory")->required();
  c_render.app->add_option("--index", render_args.index, "Render only this clip");
  c_render.app->add_option("--topology", render_args.topology, "Topology JSON (default: built-in 62-joint layout)");

  AugmentArgs aug_args;
  auto& c_aug = add("augment", "Jitter, drop out and time-shift clips");
  c_aug.bind_section("augment");
  c_aug.app->add_option("--in", aug_args.in, "Input clips (.jsonl)")->required();
  c_aug.app->add_option("--out", aug_args.out, "Output clips (.jsonl)")->required();

  EvaluateArgs eval_args;
  auto& c_eval = add("evaluate", "Compute FID, R-precision, diversity and MM-Dist");
  c_eval.bind_section("eval");
  c_eval.app->add_option("--real", eval_args.real, "Reference clips (.jsonl)")->required();
  c_eval.app->add_option("--gen", eval_args.gen, "Generated clips (.jsonl)")->required();
  c_eval.app->add_option("--report", eval_args.report, "Report JSON path")->required();

  AblateArgs ablate_args;
  auto& c_ablate = add("ablate", "Run the bins x depth x decoding grid");
  c_ablate.bind_section("ablate");
  c_ablate.app->add_option("--out", ablate_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Logger log;
  if (g.quiet) log.threshold = Level::kWarn;
  if (g.verbose) log.threshold = Level::kDebug;
  if (g.threads > 0) set_max_threads(g.threads);

  std::string name;
  for (auto& [n, c] : commands) {
    if (c.app->parsed()) name = n;
  }
  Command& cmd = commands.at(name);

  RunManifest manifest;
  manifest.command = name;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
  std::string manifest_path = g.manifest_path;
  if (manifest_path.empty()) {
    if (name == "gen-data") manifest_path = manifest_for(gen_data.out, true);
    if (name == "train") manifest_path = manifest_for(train_args.out, false);
    if (name == "generate") manifest_path = manifest_for(gen_args.out, false);
    if (name == "render") manifest_path = manifest_for(render_args.out, true);
    if (name == "augment") manifest_path = manifest_for(aug_args.out, false);
    if (name == "evaluate") manifest_path = manifest_for(eval_args.report, false);
    if (name == "ablate") manifest_path = manifest_for(ablate_args.out, true);
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](int code, const std::string& error) {
    manifest.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.exit_code = code;
    manifest.status = code == 0 ? "ok" : "error";
    manifest.error = error;
    try {
      manifest.write(manifest_path);
    } catch (const std::exception& e) {
      log.log(Level::kError, "manifest.write_failed", {{"path", manifest_path}, {"reason", e.what()}});
    }
    return code;
  };

  try {
    ConfigStore config;
    // Precedence: defaults < SKELGEN_SEED < config file < flags.
    if (const char* env = std::getenv("SKELGEN_SEED"); env && *env) {
      for (const auto& k : default_schema()) {
        if (k.name == "seed") config.set(k.section, k.name, env);
      }
    }
    if (!g.config_path.empty()) {
      config.load_file(g.config_path);
      manifest.inputs.push_back(artifact(g.config_path));
    }
    for (const auto& b : cmd.bindings) {
      if (b.option->count() > 0) config.set(b.section, b.name, *b.value);
    }
    manifest.config = config.values();
    manifest.config_hash = config.hash();
    log.log(Level::kDebug, "config", {{"hash", manifest.config_hash}});

    if (name == "gen-data") run_gen_data(config, gen_data, manifest, log);
    if (name == "train") run_train(config, train_args, manifest, log);
    if (name == "generate") run_generate(config, gen_args, manifest, log);
    if (name == "render") run_render(config, render_args, manifest, log);
    if (name == "augment") run_augment(config, aug_args, manifest, log);
    if (name == "evaluate") run_evaluate(config, eval_args, manifest, log);
    if (name == "ablate") run_ablate(config, ablate_args, manifest, log);
  } catch (const skelgen::Error& e) {
    std::cerr << "error: [" << e.module() << "] " << e.what() << "\n";
    return finish(1, e.module() + ": " + e.what());
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return finish(1, std::string("internal: ") + e.what());
  }
  return finish(0, "");
}
