#include "fes/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fes {

double haversine(const GeoContext& a, const GeoContext& b) {
  constexpr double deg = M_PI / 180.0;
  const double dlat = (b.latitude - a.latitude) * deg;
  const double dlon = (b.longitude - a.longitude) * deg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 +
                   std::cos(a.latitude * deg) * std::cos(b.latitude * deg) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

Matrix pairwise_cosine(const Matrix& vecs) {
  const Index n = vecs.cols();
  Vector norms = vecs.colwise().norm();
  Matrix g = vecs.transpose() * vecs;
  Matrix sim(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double d = norms(i) * norms(j);
      sim(i, j) = d == 0.0 ? 0.0 : std::clamp(g(i, j) / d, -1.0, 1.0);
    }
    sim(i, i) = norms(i) == 0.0 ? 0.0 : 1.0;
  }
  return sim;
}

double threshold_from_sorted(const std::vector<double>& sorted, double tau) {
  if (sorted.empty()) throw ConfigError("threshold selection on an empty list");
  const auto len = static_cast<long>(sorted.size());
  auto rank = static_cast<long>(tau * static_cast<double>(len));  // 1-based
  rank = std::clamp(rank, 1L, len);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

double derive_context_threshold(const std::vector<GeoContext>& contexts, double tau) {
  if (contexts.size() < 2)
    throw ConfigError("context threshold needs at least 2 contexts");
  std::vector<double> dists;
  dists.reserve(contexts.size() * (contexts.size() - 1) / 2);
  for (std::size_t i = 0; i < contexts.size(); ++i)
    for (std::size_t j = i + 1; j < contexts.size(); ++j)
      dists.push_back(haversine(contexts[i], contexts[j]));
  std::sort(dists.begin(), dists.end());
  return threshold_from_sorted(dists, tau);
}

double derive_similarity_threshold(const Matrix& pairwise_sim, double tau) {
  const Index n = pairwise_sim.rows();
  if (n < 2) throw ConfigError("similarity threshold needs at least 2 vectors");
  std::vector<double> sims;
  sims.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) sims.push_back(pairwise_sim(i, j));
  std::sort(sims.begin(), sims.end(), std::greater<>());
  return threshold_from_sorted(sims, tau);
}

Index context_sensitive_threshold(Index n_min, double tau, Index candidate_size) {
  const double v = std::max(static_cast<double>(n_min),
                            tau * static_cast<double>(candidate_size));
  return static_cast<Index>(std::ceil(v));
}

}  // namespace fes
