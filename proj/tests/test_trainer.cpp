#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "skelgen/checkpoint.hpp"
#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/parallel.hpp"
#include "skelgen/trainer.hpp"

using namespace skelgen;

namespace {

struct Fixture {
  ModelConfig model;
  TrainConfig train;
  std::vector<TrainExample> data;

  Fixture() {
    model.d_model = 16;
    model.layers = 2;
    model.heads = 2;
    model.bins = 32;
    model.max_frames = 2;
    model.text_buckets = 64;
    model.text_width = 16;
    model.max_prompt_tokens = 8;
    train.lr = 1e-3;
    train.batch_size = 4;
    const auto clips = generate_dataset(10, 1, 2, 3);
    data = make_examples(clips, PromptTokenizer(model.text_buckets, model.max_prompt_tokens),
                         Vocabulary(model.bins));
  }
};

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("skelgen_test_" + name)).string();
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
  std::vector<const MatF*> x;
  a.for_each([&](const std::string&, const MatF& m) { x.push_back(&m); });
  std::size_t i = 0;
  bool same = true;
  b.for_each([&](const std::string&, const MatF& m) { same = same && m == *x[i++]; });
  return same && i == x.size();
}

TrainExample example_of_length(Index body, std::int32_t fill) {
  TrainExample ex;
  ex.prompt_ids = {5, 0};
  ex.stream.framed = true;
  ex.stream.tokens.push_back(Vocabulary::kBos);
  for (Index i = 0; i < body; ++i) ex.stream.tokens.push_back(fill);
  ex.stream.tokens.push_back(Vocabulary::kEos);
  return ex;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pad_batch right-pads to the longest row") {
  ModelConfig m = oracle::tiny_config();
  m.max_frames = 6;
  std::vector<TrainExample> same = {example_of_length(6, 5), example_of_length(6, 6)};
  const auto b0 = pad_batch(same, m);
  for (const auto& r : b0.rows) CHECK(r.pad == 0);

  // Rows of total length 10 and 14.
  std::vector<TrainExample> mixed = {example_of_length(6, 5), example_of_length(10, 6)};
  const auto b = pad_batch(mixed, m);
  CHECK(b.length == 14);
  CHECK(b.rows[0].pad == 4);
  CHECK(b.rows[1].pad == 0);
  CHECK(b.rows[0].tokens.size() == 12);
  for (int i = 8; i < 12; ++i) CHECK(b.rows[0].tokens[static_cast<std::size_t>(i)] == Vocabulary::kPad);
  Index supervised = 0;
  for (auto v : b.rows[0].targets.mask) supervised += v;
  CHECK(supervised == 7);

  std::vector<TrainExample> over = {example_of_length(6, 5), example_of_length(40, 6)};
  over[1].label = "too long";
  try {
    pad_batch(over, m);
    FAIL("expected LengthError");
  } catch (const LengthError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    CHECK(std::string(e.what()).find("too long") != std::string::npos);
  }
}

TEST_CASE("padded and unpadded batches give the same loss") {
  Fixture f;
  const auto p = ModelParams<float>::init(f.model, 1);
  auto by_length = [](const TrainExample& a, const TrainExample& b) {
    return a.stream.tokens.size() < b.stream.tokens.size();
  };
  const auto& shortest = *std::min_element(f.data.begin(), f.data.end(), by_length);
  const auto& longest = *std::max_element(f.data.begin(), f.data.end(), by_length);
  REQUIRE(longest.stream.tokens.size() > shortest.stream.tokens.size());
  std::vector<TrainExample> one = {shortest};
  std::vector<TrainExample> two = {shortest, longest};
  const auto b1 = pad_batch(one, f.model);
  const auto b2 = pad_batch(two, f.model);
  CHECK(b2.rows[0].pad > 0);
  const double alone = example_loss<float>(p, f.model, b1.rows[0].prompt_ids, b1.rows[0].tokens).mean();
  const double padded = example_loss<float>(p, f.model, b2.rows[0].prompt_ids, b2.rows[0].tokens).mean();
  CHECK(std::abs(alone - padded) < 1e-7);
}

TEST_CASE("zero gradients only apply weight decay") {
  Fixture f;
  auto p = ModelParams<float>::init(f.model, 2);
  const auto before = p;
  auto state = AdamState::zeros(f.model);
  const auto zero = ModelParams<float>::zeros(f.model);
  adamw_update(p, zero, state, f.train, f.model);
  const float factor = static_cast<float>(1.0 - f.train.lr * f.train.weight_decay);
  std::vector<const MatF*> b;
  before.for_each([&](const std::string&, const MatF& m) { b.push_back(&m); });
  std::size_t i = 0;
  p.for_each([&](const std::string&, const MatF& m) {
    CHECK(m == (*b[i] * factor).eval());
    ++i;
  });
}

TEST_CASE("adamw first step moves each weight by lr against the gradient sign") {
  ModelConfig m = oracle::tiny_config();
  TrainConfig t;
  t.lr = 1e-2;
  t.weight_decay = 0.0;
  auto p = ModelParams<float>::zeros(m);
  auto g = ModelParams<float>::zeros(m);
  g.w_lm(0, 0) = 3.0f;
  g.w_lm(1, 1) = -0.5f;
  auto state = AdamState::zeros(m);
  adamw_update(p, g, state, t, m);
  CHECK(p.w_lm(0, 0) == doctest::Approx(-1e-2).epsilon(1e-5));
  CHECK(p.w_lm(1, 1) == doctest::Approx(1e-2).epsilon(1e-5));
  CHECK(p.w_lm(2, 2) == 0.0f);
  CHECK(state.step == 1);
}

TEST_CASE("frozen text table is left untouched") {
  Fixture f;
  f.model.train_text_table = false;
  auto p = ModelParams<float>::init(f.model, 3);
  const MatF table = p.text_table;
  auto state = AdamState::zeros(f.model);
  train(p, state, f.model, f.train, f.data, 3);
  CHECK(p.text_table == table);
}

TEST_CASE("batch indices are a pure function of the step") {
  const auto a = batch_indices(10, 4, 7, 5);
  const auto b = batch_indices(10, 4, 7, 5);
  CHECK(a == b);
  // One epoch of 10 examples covers each exactly once.
  std::vector<int> seen(10, 0);
  for (long s = 0; s < 5; ++s) {
    for (auto i : batch_indices(10, 2, 7, s)) ++seen[i];
  }
  for (int c : seen) CHECK(c == 1);
  CHECK_THROWS_AS(batch_indices(0, 4, 7, 0), InputError);
}

TEST_CASE("training is deterministic across thread counts") {
  Fixture f;
  auto run = [&](int threads) {
    set_max_threads(threads);
    auto p = ModelParams<float>::init(f.model, 4);
    auto s = AdamState::zeros(f.model);
    train(p, s, f.model, f.train, f.data, 20);
    return p;
  };
  const auto one = run(1);
  const auto again = run(1);
  const auto four = run(4);
  set_max_threads(0);
  CHECK(same_params(one, again));
  CHECK(same_params(one, four));
}

TEST_CASE("checkpoint round-trip is lossless") {
  Fixture f;
  Checkpoint ck{f.model, f.train, ModelParams<float>::init(f.model, 5), AdamState::zeros(f.model)};
  train(ck.params, ck.optimizer, f.model, f.train, f.data, 3);
  const auto path = temp_path("ckpt_roundtrip.skg");
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.model == ck.model);
  CHECK(back.train == ck.train);
  CHECK(back.optimizer.step == 3);
  CHECK(same_params(back.params, ck.params));
  CHECK(same_params(back.optimizer.m, ck.optimizer.m));
  CHECK(same_params(back.optimizer.v, ck.optimizer.v));
  std::filesystem::remove(path);
}

TEST_CASE("resuming matches an uninterrupted run") {
  Fixture f;
  auto p = ModelParams<float>::init(f.model, 6);
  auto s = AdamState::zeros(f.model);
  const auto p0 = p;
  train(p, s, f.model, f.train, f.data, 60);

  auto q = p0;
  auto t = AdamState::zeros(f.model);
  train(q, t, f.model, f.train, f.data, 50);
  const auto path = temp_path("ckpt_resume.skg");
  save_checkpoint(path, {f.model, f.train, q, t});
  auto ck = load_checkpoint(path);
  train(ck.params, ck.optimizer, f.model, f.train, f.data, 60);
  CHECK(ck.optimizer.step == 60);
  CHECK(same_params(ck.params, p));
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints raise structured errors") {
  Fixture f;
  const auto path = temp_path("ckpt_corrupt.skg");
  save_checkpoint(path, {f.model, f.train, ModelParams<float>::init(f.model, 7), AdamState::zeros(f.model)});
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  bad = bytes;
  bad[8] = 9;
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path), VersionError);

  write(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  write(bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Fixture f;
  auto p = ModelParams<float>::init(f.model, 8);
  p.w_lm(4, 0) = std::nanf("");
  auto s = AdamState::zeros(f.model);
  std::vector<TrainExample> one = {f.data[0]};
  try {
    train_step(pad_batch(one, f.model), p, s, f.train, f.model);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step=") != std::string::npos);
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  Fixture f;
  f.train.clip_norm = 1e-3;
  auto p = ModelParams<float>::init(f.model, 9);
  auto s = AdamState::zeros(f.model);
  std::vector<TrainExample> batch(f.data.begin(), f.data.begin() + 4);
  const auto r = train_step(pad_batch(batch, f.model), p, s, f.train, f.model);
  CHECK(r.grad_norm > 1e-3);
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("fixed-batch loss decreases over the first 50 steps") {
  Fixture f;
  std::vector<TrainExample> batch(f.data.begin(), f.data.begin() + 4);
  const auto padded = pad_batch(batch, f.model);
  int monotone = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    auto p = ModelParams<float>::init(f.model, static_cast<std::uint64_t>(seed));
    auto s = AdamState::zeros(f.model);
    double prev = 1e30;
    bool ok = true;
    for (int step = 0; step < 50; ++step) {
      const double loss = train_step(padded, p, s, f.train, f.model).loss;
      ok = ok && loss <= prev;
      prev = loss;
    }
    monotone += ok;
  }
  CHECK(monotone >= 9);
}

}  // TEST_SUITE
