#include <doctest.h>

#include <cmath>

#include "skelgen/datagen.hpp"
#include "skelgen/error.hpp"
#include "skelgen/metrics.hpp"
#include "skelgen/rng.hpp"

using namespace skelgen;

namespace {

MatD gaussian(Index n, Index d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  MatD x(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < d; ++k) x(i, k) = scale * normal01(rng);
  }
  return x;
}

MatD random_rotation(Index d, std::uint64_t seed) {
  const MatD a = gaussian(d, d, seed);
  Eigen::HouseholderQR<MatD> qr(a);
  return qr.householderQ();
}

double all_pairs_mean(const MatD& x) {
  double sum = 0;
  long n = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.rows(); ++j) {
      if (i == j) continue;
      sum += (x.row(i) - x.row(j)).norm();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("fid of a set with itself is zero") {
  const MatD x = gaussian(200, 6, 1);
  CHECK(fid(x, x) <= 1e-6);
}

TEST_CASE("fid is symmetric") {
  const MatD a = gaussian(300, 5, 2);
  const MatD b = gaussian(300, 5, 3, 1.7);
  CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-8);
}

TEST_CASE("fid of a shifted Gaussian is the squared shift") {
  const Index d = 4;
  const MatD a = gaussian(10000, d, 4);
  MatD b = gaussian(10000, d, 5);
  RowVec<double> m(d);
  // |m| = 6 keeps the sampling spread of the mean term (about
  // 2 sqrt(2 / n) / |m| relative) well inside the 2% band.
  m << 4.0, -4.0, 2.0, 0.0;
  b.rowwise() += m;
  CHECK(fid(a, b) == doctest::Approx(m.squaredNorm()).epsilon(0.02));
}

TEST_CASE("fid of N(0, I) vs N(0, 4I) is the dimension") {
  const Index d = 4;
  // Tr(I + 4I - 2 * 2I) = d.
  CHECK(fid(gaussian(10000, d, 6), gaussian(10000, d, 7, 2.0)) ==
        doctest::Approx(static_cast<double>(d)).epsilon(0.02));
}

TEST_CASE("psd_sqrt squares back and rejects indefinite input") {
  const MatD x = gaussian(50, 4, 8);
  const MatD s = covariance(x);
  const MatD r = psd_sqrt(s);
  CHECK((r * r - s).cwiseAbs().maxCoeff() < 1e-10);

  MatD rank_deficient = MatD::Zero(3, 3);
  rank_deficient(0, 0) = 1.0;
  rank_deficient(1, 1) = -1e-12;
  CHECK_NOTHROW(psd_sqrt(rank_deficient));
  MatD bad = MatD::Identity(3, 3);
  bad(2, 2) = -0.5;
  CHECK_THROWS_AS(psd_sqrt(bad), NumericError);
  CHECK_THROWS_AS(fid(gaussian(1, 3, 1), gaussian(5, 3, 2)), InputError);
  CHECK_THROWS_AS(fid(gaussian(5, 3, 1), gaussian(5, 4, 2)), DimensionError);
}

TEST_CASE("covariance is unbiased") {
  MatD x(2, 1);
  x << 0.0, 2.0;
  CHECK(covariance(x)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("r_precision is one when text and motion coincide") {
  const MatD m = gaussian(64, 8, 9);
  const auto rp = r_precision(m, m, 32, 1);
  CHECK(rp.top1 == 1.0);
  CHECK(rp.top3 == 1.0);
  CHECK_THROWS_AS(r_precision(m.topRows(10), m.topRows(10), 32, 1), InputError);
}

TEST_CASE("r_precision of an unrelated pairing is at chance") {
  const Index n = 4000;
  const MatD t = gaussian(n, 8, 10);
  const MatD m = gaussian(n, 8, 11);
  const auto curve = r_precision_curve(t, m, 32, 3, 5);
  for (int k = 1; k <= 3; ++k) {
    const double p = k / 32.0;
    const double half = 2.576 * std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(curve[static_cast<std::size_t>(k - 1)] - p) <= half);
  }
}

TEST_CASE("r_precision is monotone in k and invariant to isometries") {
  const MatD t = gaussian(200, 6, 12);
  const MatD m = t + 0.8 * gaussian(200, 6, 13);
  const auto rp = r_precision(t, m, 32, 3);
  CHECK(rp.top1 <= rp.top2);
  CHECK(rp.top2 <= rp.top3);
  CHECK(rp.top1 > 1.0 / 32);

  const MatD q = random_rotation(6, 14);
  RowVec<double> shift = RowVec<double>::Constant(6, 3.0);
  const MatD t2 = (t * q).rowwise() + shift;
  const MatD m2 = (m * q).rowwise() + shift;
  const auto rq = r_precision(t2, m2, 32, 3);
  CHECK(rq.top1 == rp.top1);
  CHECK(rq.top2 == rp.top2);
  CHECK(rq.top3 == rp.top3);
}

TEST_CASE("diversity oracles") {
  MatD same = MatD::Ones(5, 3);
  CHECK(diversity(same, 100, 1) == 0.0);

  MatD two(2, 3);
  two << 0, 0, 0, 3, 4, 0;
  CHECK(diversity(two, 50, 2) == doctest::Approx(5.0).epsilon(1e-15));

  // E|X - Y| for X, Y ~ N(0, I_k) is 2 Gamma((k+1)/2) / Gamma(k/2).
  const int k = 8;
  const double expected = 2.0 * std::tgamma((k + 1) / 2.0) / std::tgamma(k / 2.0);
  CHECK(diversity(gaussian(4000, k, 15), 40000, 3) == doctest::Approx(expected).epsilon(0.01));

  const MatD small = gaussian(6, 3, 16);
  CHECK(diversity(small, 200000, 4) == doctest::Approx(all_pairs_mean(small)).epsilon(0.01));
  CHECK_THROWS_AS(diversity(gaussian(1, 3, 1), 10, 0), InputError);
}

TEST_CASE("mm_dist oracles") {
  const MatD m = gaussian(30, 4, 17);
  CHECK(mm_dist(m, m) == 0.0);
  RowVec<double> v(4);
  v << 1, 2, 2, 0;
  const MatD shifted = m.rowwise() + v;
  CHECK(mm_dist(shifted, m) == doctest::Approx(3.0).epsilon(1e-12));

  const MatD t = gaussian(30, 4, 18);
  double brute = 0;
  for (Index i = 0; i < 30; ++i) brute += (t.row(i) - m.row(i)).norm();
  CHECK(mm_dist(t, m) == doctest::Approx(brute / 30).epsilon(1e-12));
  CHECK(mm_dist((t.array() + 7).matrix(), (m.array() + 7).matrix()) ==
        doctest::Approx(mm_dist(t, m)).epsilon(1e-12));
  CHECK(mm_dist(2 * t, 2 * m) == doctest::Approx(2 * mm_dist(t, m)).epsilon(1e-12));
  CHECK_THROWS_AS(mm_dist(t, m.leftCols(3)), DimensionError);
}

TEST_CASE("embedding providers") {
  const auto corpus = generate_dataset(20, 4, 6, 1);
  const RandomProjectionProvider r(62, 64);
  CHECK(r.id() == "random64");
  const VecD e = r.embed_motion(corpus[0].pose);
  CHECK(e.size() == 64);
  CHECK(e == r.embed_motion(corpus[0].pose));
  CHECK(r.embed_text("jump") == r.embed_text("jump"));
  CHECK(r.embed_text("jump") != r.embed_text("kick"));

  const PrototypeProvider p(62, corpus, 64);
  CHECK(p.id() == "proto64");
  VecD centroid = VecD::Zero(64);
  int n = 0;
  for (const auto& c : corpus) {
    if (c.prompt == corpus[0].prompt) {
      centroid += r.embed_motion(c.pose);
      ++n;
    }
  }
  centroid /= n;
  CHECK((p.embed_text(corpus[0].prompt) - centroid).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.embed_text("unseen prompt") == r.embed_text("unseen prompt"));

  CHECK(make_provider("random64", 62, {})->id() == "random64");
  CHECK(make_provider("proto64", 62, corpus)->id() == "proto64");
  CHECK_THROWS_AS(make_provider("clip", 62, {}), ConfigError);
}

TEST_CASE("resample_flat interpolates linearly") {
  PoseSequence::Coords c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  const VecD r = resample_flat(PoseSequence(c, 1), 3);
  CHECK(r.size() == 6);
  CHECK(r(2) == doctest::Approx(0.5));
  CHECK(r(3) == doctest::Approx(0.5));
  CHECK(r(4) == 1.0);
}

TEST_CASE("metrics report JSON round-trip and evaluate") {
  const auto corpus = generate_dataset(40, 4, 6, 2);
  const auto provider = make_provider("proto64", 62, corpus);
  const auto rep = evaluate(corpus, corpus, *provider, EvalOptions{});
  CHECK(rep.fid <= 1e-6);
  CHECK(rep.pool == 32);
  CHECK(rep.n_gen == 40);
  CHECK(rep.rp1 <= rep.rp3);
  CHECK(rep.diversity > 0.0);

  const auto back = MetricsReport::from_json(rep.to_json());
  CHECK(back.provider == rep.provider);
  CHECK(back.fid == rep.fid);
  CHECK(back.rp2 == rep.rp2);
  CHECK(back.mm_dist == rep.mm_dist);
  CHECK(back.diversity_pairs == rep.diversity_pairs);
  CHECK_THROWS_AS(MetricsReport::from_json("{\"fid\": 1}"), FormatError);

  const std::vector<ClipRecord> few(corpus.begin(), corpus.begin() + 5);
  CHECK(evaluate(corpus, few, *provider, EvalOptions{}).pool == 5);
}

}  // TEST_SUITE
