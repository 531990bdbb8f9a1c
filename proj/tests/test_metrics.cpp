#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fes/metrics.hpp"
#include "fes/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace fes;

namespace {

GeoContext random_context(Rng& rng) {
  return {uniform_real(rng, -90.0, 90.0), uniform_real(rng, -180.0, 180.0)};
}

// Independent re-derivation of the rank rule: 1-based rank floor(tau*L),
// clamped to [1, L], on an already-sorted list.
double rank_oracle(std::vector<double> sorted, double tau) {
  const auto L = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::floor(tau * L));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace

TEST_CASE("haversine identity, symmetry, antipodal oracle") {
  const GeoContext a(12.5, -31.0);
  CHECK(haversine(a, a) == 0.0);

  // Half the equator: pi * earth radius.
  CHECK(haversine({0.0, 0.0}, {0.0, 180.0}) ==
        doctest::Approx(20015.0868).epsilon(1e-6));

  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    const GeoContext p = random_context(rng), q = random_context(rng);
    CHECK(haversine(p, q) == haversine(q, p));
    CHECK(haversine(p, q) >= 0.0);
  }
}

TEST_CASE("haversine triangle inequality on random triples") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const GeoContext a = random_context(rng), b = random_context(rng),
                     c = random_context(rng);
    CHECK(haversine(a, b) <= haversine(a, c) + haversine(c, b) + 1e-9);
  }
}

TEST_CASE("cosine similarity basics") {
  Vector x(2), y(2);
  x << 1.0, 1.0;
  y << 1.0, 0.0;
  CHECK(cosine_sim(x, y) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  Vector e1(2), e2(2);
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  CHECK(cosine_sim(e1, e2) == 0.0);

  Vector z(3);
  z << 0.3, 1.2, 0.7;
  CHECK(cosine_sim(z, z) == doctest::Approx(1.0).epsilon(1e-12));

  Vector zero = Vector::Zero(3);
  CHECK(cosine_sim(zero, z) == 0.0);

  Vector wrong(4);
  CHECK_THROWS_AS((void)cosine_sim(z, wrong), ConfigError);
}

TEST_CASE("cosine similarity of non-negative vectors stays in [0, 1]") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Vector a(5), b(5);
    for (int k = 0; k < 5; ++k) {
      a(k) = uniform_real(rng, 0.0, 3.0);
      b(k) = uniform_real(rng, 0.0, 3.0);
    }
    const double c = cosine_sim(a, b);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("threshold_from_sorted implements the clamped rank rule") {
  const std::vector<double> asc{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(threshold_from_sorted(asc, 0.5) == 5.0);
  CHECK(threshold_from_sorted(asc, 0.0) == 1.0);  // rank clamped up to 1
  CHECK(threshold_from_sorted(asc, 0.999) == 9.0);

  const std::vector<double> desc{0.9, 0.8, 0.7, 0.6};
  CHECK(threshold_from_sorted(desc, 0.5) == 0.8);  // rank 2 of the descending list

  CHECK_THROWS_AS((void)threshold_from_sorted({}, 0.5), ConfigError);
}

TEST_CASE("context threshold: degenerate and brute-force oracle") {
  const std::vector<GeoContext> same(4, GeoContext(10.0, 20.0));
  CHECK(derive_context_threshold(same, 0.0) == 0.0);
  CHECK(derive_context_threshold(same, 0.5) == 0.0);
  CHECK(derive_context_threshold(same, 0.9) == 0.0);

  CHECK_THROWS_AS((void)derive_context_threshold({GeoContext(0, 0)}, 0.5), ConfigError);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<GeoContext> pts;
    for (int i = 0; i < 9; ++i) pts.push_back(random_context(rng));
    std::vector<double> dists;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        dists.push_back(haversine(pts[i], pts[j]));
    std::sort(dists.begin(), dists.end());
    for (double tau : {0.0, 0.2, 0.5, 0.8, 0.99})
      CHECK(derive_context_threshold(pts, tau) == rank_oracle(dists, tau));
  }
}

TEST_CASE("context threshold is monotone non-decreasing in tau") {
  Rng rng(5);
  std::vector<GeoContext> pts;
  for (int i = 0; i < 12; ++i) pts.push_back(random_context(rng));
  double prev = -1.0;
  for (double tau = 0.0; tau < 1.0; tau += 0.05) {
    const double t = derive_context_threshold(pts, tau);
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("similarity threshold: degenerate and brute-force oracle") {
  Matrix cols(3, 4);
  for (int j = 0; j < 4; ++j) cols.col(j) << 1.0, 2.0, 3.0;
  const Matrix sim_same = pairwise_cosine(cols);
  CHECK(derive_similarity_threshold(sim_same, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(derive_similarity_threshold(sim_same, 0.7) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix v(6, 7);
    for (Index j = 0; j < v.cols(); ++j)
      for (Index i = 0; i < v.rows(); ++i) v(i, j) = uniform_real(rng, 0.0, 2.0);
    const Matrix sim = pairwise_cosine(v);
    std::vector<double> sims;
    for (Index i = 0; i < v.cols(); ++i)
      for (Index j = i + 1; j < v.cols(); ++j) sims.push_back(sim(i, j));
    std::sort(sims.begin(), sims.end(), std::greater<>());
    for (double tau : {0.0, 0.3, 0.5, 0.9})
      CHECK(derive_similarity_threshold(sim, tau) == rank_oracle(sims, tau));
  }

  CHECK_THROWS_AS((void)derive_similarity_threshold(Matrix::Ones(1, 1), 0.5),
                  ConfigError);
}

TEST_CASE("similarity threshold is monotone non-increasing in tau") {
  Rng rng(13);
  Matrix v(5, 10);
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i) v(i, j) = uniform_real(rng, 0.0, 2.0);
  const Matrix sim = pairwise_cosine(v);
  double prev = 2.0;
  for (double tau = 0.0; tau < 1.0; tau += 0.05) {
    const double t = derive_similarity_threshold(sim, tau);
    CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("pairwise_cosine matches cosine_sim entrywise") {
  Rng rng(21);
  Matrix v(4, 6);
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i) v(i, j) = uniform_real(rng, 0.0, 1.0);
  v.col(2).setZero();  // a silent entity: similarity 0 to everyone
  const Matrix sim = pairwise_cosine(v);
  REQUIRE(sim.rows() == 6);
  REQUIRE(sim.cols() == 6);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j)
      CHECK(sim(i, j) == doctest::Approx(cosine_sim(v.col(i), v.col(j))).epsilon(1e-12));
  CHECK(sim.col(2).isZero(0.0));
}

TEST_CASE("context-sensitive acceptance size") {
  CHECK(context_sensitive_threshold(100, 0.5, 150) == 100);
  CHECK(context_sensitive_threshold(65, 0.5, 300) == 150);
  CHECK(context_sensitive_threshold(5, 0.7, 0) == 5);
  // ceil applies to the tau term: 0.5 * 5 = 2.5 -> 3
  CHECK(context_sensitive_threshold(1, 0.5, 5) == 3);
}
