#ifndef FES_METRICS_HPP
#define FES_METRICS_HPP

#include "fes/types.hpp"

#include <cmath>
#include <vector>

namespace fes {

constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in kilometers between two contexts.
double haversine(const GeoContext& a, const GeoContext& b);

/// Cosine similarity of two equal-length vectors. Zero-norm vectors carry no
/// behavioral evidence and get similarity 0 to everything.
template <typename DerivedA, typename DerivedB>
double cosine_sim(const Eigen::MatrixBase<DerivedA>& x,
                  const Eigen::MatrixBase<DerivedB>& y) {
  if (x.size() != y.size()) throw ConfigError("cosine_sim: length mismatch");
  const double nx = x.template cast<double>().norm();
  const double ny = y.template cast<double>().norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  const double c = x.template cast<double>().cwiseProduct(y.template cast<double>()).sum() / (nx * ny);
  return std::clamp(c, -1.0, 1.0);
}

/// Pairwise cosine similarities of the columns of vecs (one entity per column).
/// Computed once per clustering invocation and reused as a read-only cache.
Matrix pairwise_cosine(const Matrix& vecs);

/// Element at 1-based rank floor(tau * L) of a sorted list, rank clamped to
/// [1, L]. The selection rule shared by the context and similarity thresholds.
double threshold_from_sorted(const std::vector<double>& sorted, double tau);

/// tau-quantile of the ascending all-pairs Haversine distance list.
double derive_context_threshold(const std::vector<GeoContext>& contexts, double tau);

/// tau-quantile of the descending all-pairs cosine similarity list. The pair
/// similarities are read from a precomputed pairwise matrix.
double derive_similarity_threshold(const Matrix& pairwise_sim, double tau);

/// ceil(max(n_min, tau * candidate_size)): minimum accepted cluster size.
Index context_sensitive_threshold(Index n_min, double tau, Index candidate_size);

/// Thresholds for clustering one entity axis, all derived from the single
/// data-driven knob tau.
struct ThresholdSet {
  double t_context = 0.0;     // km; HD <= t_context joins the context growth
  double t_similarity = 0.0;  // cosine; CSM >= t_similarity joins the similarity growth
  Index n_min = 1;
  double tau = 0.5;
};

}  // namespace fes

#endif  // FES_METRICS_HPP
