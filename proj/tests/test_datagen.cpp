#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/pose.hpp"

using namespace skelgen;

TEST_SUITE("datagen") {

TEST_CASE("fixed seed gives byte-identical corpora") {
  const auto a = generate_dataset(25, 3, 7, 11);
  const auto b = generate_dataset(25, 3, 7, 11);
  const auto c = generate_dataset(25, 3, 7, 12);
  REQUIRE(a.size() == 25);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(to_json_line(a[i]) == to_json_line(b[i]));
    any_diff = any_diff || to_json_line(a[i]) != to_json_line(c[i]);
  }
  CHECK(any_diff);
}

TEST_CASE("families are balanced and prompts identify them") {
  const auto& fam = motion_families();
  REQUIRE(fam.size() == 5);
  const auto corpus = generate_dataset(100, 2, 4, 3);
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(corpus[i].prompt == fam[i % fam.size()]->prompt());
    ++count[corpus[i].prompt];
  }
  CHECK(count.size() == 5);
  for (const auto& [prompt, n] : count) CHECK(n == 20);
  std::set<std::string> prompts;
  for (const auto& f : fam) prompts.insert(f->prompt());
  CHECK(prompts.size() == fam.size());
  CHECK(family_by_name("kick").name() == "kick");
  CHECK_THROWS(family_by_name("moonwalk"));
}

TEST_CASE("clip lengths and coordinates stay in range") {
  const auto corpus = generate_dataset(60, 5, 9, 4);
  for (const auto& c : corpus) {
    CHECK(c.pose.frames() >= 5);
    CHECK(c.pose.frames() <= 9);
    CHECK(c.pose.joints() == 62);
    CHECK(c.pose.coords().minCoeff() >= 0.0);
    CHECK(c.pose.coords().maxCoeff() <= 1.0);
  }
  CHECK_THROWS_AS(generate_dataset(0, 1, 2, 0), InputError);
  CHECK_THROWS_AS(generate_dataset(5, 3, 2, 0), InputError);
}

TEST_CASE("every family is periodic in phase") {
  for (const auto& f : motion_families()) {
    Rng rng(7);
    const auto p = f->sample(rng);
    for (double u : {0.0, 0.13, 0.5, 0.91}) {
      const auto a = f->evaluate(p, u);
      const auto b = f->evaluate(p, u + 1.0);
      REQUIRE(a.size() == b.size());
      double worst = 0;
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
      CHECK_MESSAGE(worst < 1e-6, f->name());
    }
  }
}

TEST_CASE("cartwheel closes a full turn") {
  const auto& f = family_by_name("cartwheel");
  Rng rng(8);
  const auto p = f.sample(rng);
  const auto a = f.evaluate(p, 0.25);
  const auto b = f.evaluate(p, 1.25);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("split is a seeded disjoint partition") {
  const auto [train, test] = split_indices(100, 0.9, 5);
  CHECK(train.size() == 90);
  CHECK(test.size() == 10);
  std::set<std::size_t> all(train.begin(), train.end());
  for (auto i : test) CHECK(all.insert(i).second);
  CHECK(all.size() == 100);
  CHECK(split_indices(100, 0.9, 5) == std::make_pair(train, test));
  CHECK(split_indices(100, 0.9, 6) != std::make_pair(train, test));
  CHECK(split_indices(7, 0.5, 1).first.size() == 4);
  CHECK_THROWS_AS(split_indices(10, 1.5, 0), InputError);

  const auto corpus = generate_dataset(20, 2, 2, 9);
  const auto s = split(corpus, 0.75, 2);
  CHECK(s.train.size() == 15);
  CHECK(s.test.size() == 5);
}

TEST_CASE("generated poses survive quantization round-trips") {
  const Vocabulary v(256);
  for (const auto& c : generate_dataset(10, 3, 5, 10)) {
    const auto q = deserialize(serialize(c.pose, v, true), c.pose.joints(), v);
    CHECK((q.coords() - c.pose.coords()).cwiseAbs().maxCoeff() <= 1.0 / 255 + 1e-12);
    const auto again = deserialize(serialize(q, v, true), q.joints(), v);
    CHECK(again.coords() == q.coords());
  }
}

}  // TEST_SUITE
