#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fes/imputation.hpp"
#include "fes/rng.hpp"
#include "fes/synth.hpp"

#include <filesystem>
#include <vector>

using namespace fes;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("fes_imp_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

QosMatrix rank1_fixture(Index m, Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector a(m), b(n);
  for (Index i = 0; i < m; ++i) a(i) = uniform_real(rng, 0.5, 2.0);
  for (Index j = 0; j < n; ++j) b(j) = uniform_real(rng, 0.5, 2.0);
  return QosMatrix(Matrix(a * b.transpose()));
}

}  // namespace

TEST_CASE("cf_fill leaves dense input unchanged") {
  const QosMatrix dense = rank1_fixture(6, 8, 1);
  const QosMatrix out = cf_fill(dense);
  CHECK(out.values == dense.values);
}

TEST_CASE("cf_fill uses the only similar neighbor that rated the column") {
  QosMatrix m(2, 2);
  m.values << 1.0, 0.0,
              1.0, 2.0;
  const QosMatrix out = cf_fill(m);
  CHECK(out.values(0, 1) == 2.0);
  CHECK(out.values(0, 0) == 1.0);
  CHECK(out.values(1, 0) == 1.0);
  CHECK(out.values(1, 1) == 2.0);
}

TEST_CASE("cf_fill single-entry matrix falls back to the global mean") {
  QosMatrix m(3, 3);
  m.values(1, 2) = 4.5;
  const QosMatrix out = cf_fill(m);
  for (Index u = 0; u < 3; ++u)
    for (Index s = 0; s < 3; ++s) CHECK(out.values(u, s) == 4.5);
}

TEST_CASE("cf_fill rejects an all-zero matrix") {
  CHECK_THROWS_WITH_AS((void)cf_fill(QosMatrix(3, 3)),
                       doctest::Contains("nothing to anchor"), DataError);
}

TEST_CASE("cf_fill preserves observed cells bit-exactly and fills every hole") {
  SynthSpec spec;
  spec.n_users = 15;
  spec.n_services = 25;
  spec.density = 0.4;
  spec.seed = 3;
  const QosMatrix sparse = make_synthetic(spec).matrix;
  const QosMatrix out = cf_fill(sparse);
  for (Index u = 0; u < 15; ++u)
    for (Index s = 0; s < 25; ++s) {
      if (sparse.valid(u, s))
        CHECK(out.values(u, s) == sparse.values(u, s));
      CHECK(out.values(u, s) > 0.0);
    }
}

TEST_CASE("mf_fill recovers a masked rank-1 matrix within 5 percent") {
  const QosMatrix truth = rank1_fixture(12, 16, 7);
  QosMatrix masked = truth;
  Rng rng(11);
  std::vector<std::pair<Index, Index>> holes;
  for (Index u = 0; u < 12; ++u)
    for (Index s = 0; s < 16; ++s)
      if (uniform01(rng) < 0.2) {
        masked.values(u, s) = 0.0;
        holes.emplace_back(u, s);
      }
  REQUIRE(holes.size() > 10);

  MfParams params;
  params.seed = 99;
  const QosMatrix out = mf_fill(masked, params);
  double rel = 0.0;
  for (const auto& [u, s] : holes)
    rel += std::abs(out.values(u, s) - truth.values(u, s)) / truth.values(u, s);
  rel /= static_cast<double>(holes.size());
  CHECK(rel <= 0.05);
}

TEST_CASE("mf_fill overwrites valid cells with their true values") {
  const QosMatrix dense = rank1_fixture(5, 7, 13);
  MfParams params;
  params.seed = 1;
  const QosMatrix out = mf_fill(dense, params);
  CHECK(out.values == dense.values);

  QosMatrix sparse = dense;
  sparse.values(0, 0) = sparse.values(3, 4) = 0.0;
  const QosMatrix filled = mf_fill(sparse, params);
  for (Index u = 0; u < 5; ++u)
    for (Index s = 0; s < 7; ++s) {
      if (sparse.valid(u, s)) CHECK(filled.values(u, s) == sparse.values(u, s));
      CHECK(filled.values(u, s) > 0.0);
    }
}

TEST_CASE("mf_fill is deterministic under a fixed seed") {
  QosMatrix sparse = rank1_fixture(9, 11, 17);
  sparse.values(2, 3) = sparse.values(7, 1) = sparse.values(0, 10) = 0.0;
  MfParams params;
  params.seed = 5;
  const QosMatrix a = mf_fill(sparse, params);
  const QosMatrix b = mf_fill(sparse, params);
  CHECK(a.values == b.values);

  params.seed = 6;
  const QosMatrix c = mf_fill(sparse, params);
  CHECK(a.values != c.values);
}

TEST_CASE("mf training objective is non-increasing at a stable learning rate") {
  QosMatrix sparse = rank1_fixture(10, 12, 19);
  Rng rng(23);
  for (Index u = 0; u < 10; ++u)
    for (Index s = 0; s < 12; ++s)
      if (uniform01(rng) < 0.3) sparse.values(u, s) = 0.0;

  MfParams params;
  params.lr = 0.002;
  params.epochs = 150;
  params.seed = 2;
  std::vector<double> objective;
  (void)mf_fill(sparse, params, &objective);
  REQUIRE(objective.size() == 150);
  for (std::size_t e = 1; e < objective.size(); ++e)
    CHECK(objective[e] <= objective[e - 1] * (1.0 + 1e-12));
}

TEST_CASE("store counts match the summed cluster areas") {
  SynthSpec spec;
  spec.n_users = 20;
  spec.n_services = 20;
  spec.density = 0.6;
  spec.seed = 31;
  const DatasetBundle b = make_synthetic(spec);
  const ForestPair forests =
      build_forest(b.matrix, &b.user_contexts, &b.service_contexts, 0.5, 2);

  MfParams mf;
  mf.seed = 41;
  const PreprocessedStore store = preprocess_all(b.matrix, forests, mf);
  CHECK(store.forest_hash == forests.fingerprint());

  Index want = 0;
  for (const ClusterForest* forest : {&forests.uicl, &forests.sicl})
    for (std::size_t f = 0; f < forest->second_level.size(); ++f)
      for (std::size_t s = 0; s < forest->second_level[f].size(); ++s) {
        const auto& [rows, cols] = forest->multilevel_members(static_cast<int>(f),
                                                              static_cast<int>(s));
        want += 2 * static_cast<Index>(rows.size() * cols.size());
      }
  CHECK(store.total_cells() == want);
}

TEST_CASE("store lookup returns four dense matrices containing the pair") {
  SynthSpec spec;
  spec.n_users = 18;
  spec.n_services = 22;
  spec.density = 0.5;
  spec.seed = 37;
  const DatasetBundle b = make_synthetic(spec);
  const ForestPair forests =
      build_forest(b.matrix, &b.user_contexts, &b.service_contexts, 0.5, 2);
  MfParams mf;
  mf.seed = 43;
  const PreprocessedStore store = preprocess_all(b.matrix, forests, mf);

  for (Index u = 0; u < 18; ++u)
    for (Index s = 0; s < 22; ++s) {
      const FilledQuad quad = store.lookup(forests, u, s);
      for (const FilledMatrix* fm : {quad.q_u_c, quad.q_u_m, quad.q_s_c, quad.q_s_m}) {
        REQUIRE(fm != nullptr);
        CHECK(fm->row_pos(u) >= 0);
        CHECK(fm->col_pos(s) >= 0);
        CHECK((fm->values.array() > 0.0).all());
      }
      // CF fills preserve what was observed, inside the store too.
      if (b.matrix.valid(u, s))
        CHECK(quad.q_u_c->values(quad.q_u_c->row_pos(u), quad.q_u_c->col_pos(s)) ==
              b.matrix.values(u, s));
    }
}

TEST_CASE("store persistence round-trips and stays resumable") {
  SynthSpec spec;
  spec.n_users = 14;
  spec.n_services = 16;
  spec.density = 0.5;
  spec.seed = 47;
  const DatasetBundle b = make_synthetic(spec);
  const ForestPair forests =
      build_forest(b.matrix, &b.user_contexts, &b.service_contexts, 0.5, 2);
  MfParams mf;
  mf.seed = 53;

  const PreprocessedStore fresh = preprocess_all(b.matrix, forests, mf);

  const fs::path dir = temp_dir("resume");
  const PreprocessedStore built = preprocess_resumable(dir, b.matrix, forests, mf);
  CHECK(built.fingerprint() == fresh.fingerprint());

  // Saved artifacts load back identically.
  const PreprocessedStore loaded = load_store(dir, forests);
  CHECK(loaded.fingerprint() == fresh.fingerprint());

  // Simulate an interrupted run: drop one entry file, resume, same store.
  bool removed = false;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (!removed && e.path().extension() == ".txt") {
      fs::remove(e.path());
      removed = true;
    }
  REQUIRE(removed);
  const PreprocessedStore resumed = preprocess_resumable(dir, b.matrix, forests, mf);
  CHECK(resumed.fingerprint() == fresh.fingerprint());

  // A fresh store dir for save_store round-trip.
  const fs::path dir2 = temp_dir("save");
  save_store(dir2, fresh);
  const PreprocessedStore loaded2 = load_store(dir2, forests);
  CHECK(loaded2.fingerprint() == fresh.fingerprint());

  // Loading against a different forest is refused.
  const ForestPair other =
      build_forest(b.matrix, &b.user_contexts, &b.service_contexts, 0.3, 2);
  if (other.fingerprint() != forests.fingerprint())
    CHECK_THROWS_AS((void)load_store(dir2, other), DataError);
}

TEST_CASE("all-zero cluster submatrices fall back to the global mean") {
  // Two context sites; one site's users never invoked anything.
  QosMatrix m(6, 6);
  for (Index u = 0; u < 3; ++u)
    for (Index s = 0; s < 6; ++s) m.values(u, s) = 2.0 + double(u) * 0.1 + double(s) * 0.05;
  std::vector<GeoContext> uc, sc;
  for (int i = 0; i < 3; ++i) uc.emplace_back(0.0, 0.0);
  for (int i = 0; i < 3; ++i) uc.emplace_back(40.0, 100.0);
  for (int i = 0; i < 3; ++i) sc.emplace_back(0.0, 0.0);
  for (int i = 0; i < 3; ++i) sc.emplace_back(40.0, 100.0);

  const ForestPair forests = build_forest(m, &uc, &sc, 0.5, 1);
  MfParams mf;
  mf.seed = 59;
  const PreprocessedStore store = preprocess_all(m, forests, mf);
  for (Index u = 0; u < 6; ++u)
    for (Index s = 0; s < 6; ++s) {
      const FilledQuad quad = store.lookup(forests, u, s);
      for (const FilledMatrix* fm : {quad.q_u_c, quad.q_u_m, quad.q_s_c, quad.q_s_m})
        CHECK((fm->values.array() > 0.0).all());
    }
}
