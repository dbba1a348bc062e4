#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "skelgen/error.hpp"
#include "skelgen/model.hpp"
#include "skelgen/text_encoder.hpp"

using namespace skelgen;

namespace {

ModelParams<double> random_params(const ModelConfig& c, std::uint64_t seed, double noise = 0.3) {
  auto p = ModelParams<double>::init(c, seed).cast<double>();
  oracle::perturb_all(p, seed + 100, noise);
  return p;
}

}  // namespace

TEST_SUITE("ar-decoder") {

TEST_CASE("config validation and sizes") {
  ModelConfig c;
  CHECK(c.vocab() == 260);
  CHECK(c.max_body_tokens() == 2 * 62 * 48);
  CHECK(c.max_seq() == 32 + 2 * 62 * 48 + 2);
  c.heads = 7;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("embed_and_concat shape and content") {
  const auto c = oracle::tiny_config();
  auto p = random_params(c, 1);
  const MatD prefix = MatD::Random(2, c.d_model);
  const std::vector<std::int32_t> tokens = {1, 4, 5, 6, 7, 8, 9, 10, 11, 2};
  const MatD h0 = embed_and_concat<double>(prefix, tokens, p, c);
  CHECK(h0.rows() == 12);

  p.pos_emb.setZero();
  const MatD h1 = embed_and_concat<double>(prefix, tokens, p, c);
  CHECK(h1.topRows(2) == prefix);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    CHECK(h1.row(2 + static_cast<Index>(i)) == p.tok_emb.row(tokens[i]));
  }

  std::vector<std::int32_t> too_long(20, 4);
  CHECK_THROWS_AS(embed_and_concat<double>(prefix, too_long, p, c), LengthError);
  std::vector<std::int32_t> bad = {1, 99, 2};
  CHECK_THROWS_AS(embed_and_concat<double>(prefix, bad, p, c), TokenError);
}

TEST_CASE("different prompts change only the prefix rows") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 2);
  const PromptTokenizer tok(c.text_buckets, c.max_prompt_tokens);
  const std::vector<std::int32_t> tokens = {1, 4, 5, 6, 7, 2};
  const MatD a = embed_and_concat<double>(condition_prefix(tok.tokenize("jump high"), p), tokens, p, c);
  const MatD b = embed_and_concat<double>(condition_prefix(tok.tokenize("kick low"), p), tokens, p, c);
  REQUIRE(a.rows() == b.rows());
  CHECK(a.topRows(3) != b.topRows(3));
  CHECK(a.bottomRows(tokens.size()) == b.bottomRows(tokens.size()));
}

TEST_CASE("forward matches a loop-level reference") {
  for (int heads : {1, 2, 4}) {
    auto c = oracle::tiny_config();
    c.heads = heads;
    const auto p = random_params(c, 3);
    Rng rng(4);
    const MatD h0 = MatD::Random(9, c.d_model);
    const MatD fast = forward<double>(h0, p, c);
    const MatD ref = oracle::naive_forward(h0, p, c);
    CHECK((fast - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("attention is causal") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 5);
  MatD h0 = MatD::Random(12, c.d_model);
  const MatD base = forward<double>(h0, p, c);
  for (Index j = 0; j < h0.rows(); ++j) {
    MatD h = h0;
    h.bottomRows(h.rows() - j).setRandom();
    const MatD out = forward<double>(h, p, c);
    CHECK(out.topRows(j) == base.topRows(j));
    if (j + 1 < h0.rows()) CHECK(out.row(j) != base.row(j));
  }
}

TEST_CASE("KV-cache decoding matches the full forward pass") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 6);
  const MatD h0 = MatD::Random(11, c.d_model);
  const MatD full = forward<double>(h0, p, c);
  DecoderState<double> state(p, c);
  for (Index i = 0; i < h0.rows(); ++i) {
    const RowVec<double> step = state.push(h0.row(i), true);
    CHECK((step - full.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(state.length() == 11);
}

TEST_CASE("attention reaches the prefix at random init") {
  const auto c = oracle::tiny_config();
  const auto p = ModelParams<float>::init(c, 7).cast<double>();
  const std::vector<int> prompt = {3, 5, 0};
  const std::vector<std::int32_t> tokens = {1, 4, 5, 6, 7, 8, 9, 10, 11, 2};
  ForwardCache<double> cache;
  const MatD prefix = condition_prefix(prompt, p, &cache);
  forward<double>(embed_and_concat<double>(prefix, tokens, p, c), p, c, &cache);
  for (int b = 0; b < c.layers; ++b) {
    for (int h = 0; h < c.heads; ++h) {
      const MatD& a = attention_map(cache, b, h);
      for (Index i = 3; i < a.rows(); ++i) CHECK(a.row(i).head(3).sum() > 0.0);
      CHECK(a.row(4).tail(a.cols() - 5).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("make_targets supervises body and EOS only") {
  const std::vector<std::int32_t> tokens = {1, 4, 5, 2, 0, 0};
  const auto t = make_targets(2, tokens);
  const std::vector<std::int32_t> want_t = {-1, -1, 4, 5, 2, -1, -1, -1};
  const std::vector<std::uint8_t> want_m = {0, 0, 1, 1, 1, 0, 0, 0};
  CHECK(t.targets == want_t);
  CHECK(t.mask == want_m);
  CHECK_THROWS_AS(make_targets(2, std::vector<std::int32_t>{4, 5}), TokenError);
}

TEST_CASE("uniform logits cost ln V") {
  const MatD logits = MatD::Zero(5, 260);
  const std::vector<std::int32_t> targets = {-1, 7, 100, 2, 259};
  const std::vector<std::uint8_t> mask = {0, 1, 1, 1, 1};
  const auto r = sequence_loss<double>(logits, targets, mask);
  CHECK(r.count == 4);
  CHECK(r.mean() == doctest::Approx(std::log(260.0)).epsilon(1e-12));
  CHECK(std::log(260.0) == doctest::Approx(5.561).epsilon(1e-3));
  CHECK(r.per_position[0] == 0.0);
  const std::vector<std::uint8_t> none(5, 0);
  CHECK_THROWS_AS(sequence_loss<double>(logits, targets, none), InputError);
}

TEST_CASE("confident correct logits drive the loss to zero") {
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 60.0}) {
    MatD logits = MatD::Zero(1, 10);
    logits(0, 3) = margin;
    const auto r = sequence_loss<double>(logits, std::vector<std::int32_t>{3},
                                         std::vector<std::uint8_t>{1});
    CHECK(r.sum < prev);
    prev = r.sum;
  }
  CHECK(prev < 1e-20);
}

TEST_CASE("PAD positions change neither loss nor gradients") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 8);
  const std::vector<int> prompt = {5, 0};
  const std::vector<std::int32_t> tokens = {1, 4, 9, 6, 7, 2};
  std::vector<std::int32_t> padded = tokens;
  padded.insert(padded.end(), 4, Vocabulary::kPad);
  auto g1 = ModelParams<double>::zeros(c);
  auto g2 = ModelParams<double>::zeros(c);
  const auto a = example_loss<double>(p, c, prompt, tokens, &g1);
  const auto b = example_loss<double>(p, c, prompt, padded, &g2);
  CHECK(a.sum == doctest::Approx(b.sum).epsilon(1e-13));
  double worst = 0;
  std::vector<const MatD*> ga;
  g1.for_each([&](const std::string&, const MatD& m) { ga.push_back(&m); });
  std::size_t i = 0;
  g2.for_each([&](const std::string&, const MatD& m) {
    worst = std::max(worst, (m - *ga[i++]).cwiseAbs().maxCoeff());
  });
  CHECK(worst < 1e-12);
}

TEST_CASE("backward agrees with central differences") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 9);
  Rng rng(10);
  const auto tokens = oracle::random_stream(c, 4, rng);
  const std::vector<int> prompt = PromptTokenizer(c.text_buckets, c.max_prompt_tokens).tokenize("wave");
  REQUIRE(prompt.size() + tokens.size() == 12);
  const auto rep = oracle::fd_check_model(c, p, prompt, tokens);
  INFO("worst entry " << rep.worst);
  CHECK(rep.checked == p.count());
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("unused vocabulary rows get exactly zero gradient") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 11);
  const std::vector<std::int32_t> tokens = {1, 4, 5, 4, 5, 2};
  auto g = ModelParams<double>::zeros(c);
  example_loss<double>(p, c, {3, 0}, tokens, &g);
  for (int t = 0; t < c.vocab(); ++t) {
    const bool used = t == 1 || t == 4 || t == 5;
    if (!used) CHECK(g.tok_emb.row(t).cwiseAbs().maxCoeff() == 0.0);
  }
  for (int b = 0; b < c.text_buckets; ++b) {
    if (b != 3 && b != 0) CHECK(g.text_table.row(b).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(g.pos_emb.bottomRows(c.max_seq() - 8).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient is linear in the loss scale") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 12);
  const std::vector<std::int32_t> tokens = {1, 6, 7, 8, 9, 2};
  auto g1 = ModelParams<double>::zeros(c);
  auto g2 = ModelParams<double>::zeros(c);
  example_loss<double>(p, c, {2, 0}, tokens, &g1, 1.0);
  example_loss<double>(p, c, {2, 0}, tokens, &g2, 2.0);
  std::vector<const MatD*> ga;
  g1.for_each([&](const std::string&, const MatD& m) { ga.push_back(&m); });
  std::size_t i = 0;
  double worst = 0;
  g2.for_each([&](const std::string&, const MatD& m) {
    worst = std::max(worst, (m - 2.0 * *ga[i++]).cwiseAbs().maxCoeff());
  });
  CHECK(worst < 1e-12);
}

TEST_CASE("sequence log-probability factorizes over steps") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 13);
  Rng rng(14);
  const auto tokens = oracle::random_stream(c, 3, rng);
  const std::vector<int> prompt = {7, 0};
  const MatD logits =
      forward<double>(embed_and_concat<double>(condition_prefix(prompt, p), tokens, p, c), p, c);
  double logp = 0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto row = logits.row(static_cast<Index>(prompt.size() + i));
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    logp += row(tokens[i + 1]) - lse;
  }
  const auto r = example_loss<double>(p, c, prompt, tokens);
  const double steps = static_cast<double>(tokens.size() - 1);
  CHECK(r.count == static_cast<Index>(steps));
  CHECK(logp == doctest::Approx(-steps * r.mean()).epsilon(1e-12));
}

TEST_CASE("float forward tracks double forward") {
  const auto c = oracle::tiny_config();
  const auto pf = ModelParams<float>::init(c, 15);
  const auto pd = pf.cast<double>();
  const std::vector<std::int32_t> tokens = {1, 4, 10, 12, 19, 2};
  const auto lf = example_loss<float>(pf, c, {1, 0}, tokens);
  const auto ld = example_loss<double>(pd, c, {1, 0}, tokens);
  CHECK(lf.sum == doctest::Approx(ld.sum).epsilon(1e-5));
}

TEST_CASE("non-finite input reports a numeric error") {
  const auto c = oracle::tiny_config();
  const auto p = random_params(c, 16);
  MatD h0 = MatD::Random(4, c.d_model);
  h0(2, 3) = std::nan("");
  CHECK_THROWS_AS(forward<double>(h0, p, c), NumericError);
  auto bad = p;
  bad.blocks[1].w2(0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward<double>(MatD::Random(4, c.d_model), bad, c);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where() == 1);
  }
}

TEST_CASE("param shape check") {
  const auto c = oracle::tiny_config();
  auto p = ModelParams<float>::zeros(c);
  CHECK_NOTHROW(p.check(c));
  p.w_lm.resize(3, 3);
  CHECK_THROWS_AS(p.check(c), DimensionError);
}

}  // TEST_SUITE
