#ifndef FES_CLUSTERING_HPP
#define FES_CLUSTERING_HPP

#include "fes/metrics.hpp"
#include "fes/types.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace fes {

enum class ForestMode { UICL, SICL };

inline const char* to_string(ForestMode m) { return m == ForestMode::UICL ? "uicl" : "sicl"; }

struct Cluster {
  std::vector<Index> member_ids;  // ascending, unique, non-empty

  Index size() const { return static_cast<Index>(member_ids.size()); }
  bool contains(Index id) const;
};

struct Partition {
  std::vector<Cluster> clusters;
  bool fallback = false;  // no cluster passed acceptance; single catch-all formed
};

/// Two-level cluster forest. For UICL the first level partitions users and
/// each first-level cluster carries a partition of services; SICL mirrors
/// this with services first. Every (user, service) pair maps to exactly one
/// (first, second) cluster pair.
struct ClusterForest {
  ForestMode mode = ForestMode::UICL;
  double tau = 0.5;
  Index n_min = 1;
  ThresholdSet first_thresholds;
  std::vector<double> second_sim_thresholds;  // per first-level cluster
  double second_context_threshold = 0.0;
  bool fallback_first = false;
  std::vector<Cluster> first_level;
  std::vector<std::vector<Cluster>> second_level;
  std::uint64_t source_hash = 0;

  // Lookup tables; rebuilt after deserialization.
  std::vector<int> first_of;               // first-axis entity -> first-level id
  std::vector<std::vector<int>> second_of; // [first id][second-axis entity] -> second id

  /// (first-level id, second-level id) owning this user-service pair.
  std::pair<int, int> pair_index(Index user, Index service) const;

  /// Global (row ids, column ids) of one multi-level cluster's sub-matrix.
  std::pair<const std::vector<Index>&, const std::vector<Index>&>
  multilevel_members(int first_id, int second_id) const;

  Index multilevel_count() const;

  void rebuild_lookup(Index n_first_axis, Index n_second_axis);

  /// Structure digest; combined with the source matrix hash it invalidates
  /// artifacts built against a different forest.
  std::uint64_t fingerprint() const;
};

struct ForestPair {
  ClusterForest uicl;
  ClusterForest sicl;

  std::uint64_t fingerprint() const;
};

/// First-level clustering of one entity axis (Algorithm semantics shared by
/// users and services). `entity_vectors` holds one entity per column;
/// `contexts` may be null for WoCC mode. Residual entities are attached per
/// assign_residuals; entities with no record at all are placed by nearest
/// context when contexts are available.
Partition cluster_entities(const Matrix& entity_vectors,
                           const std::vector<GeoContext>* contexts,
                           const ThresholdSet& thresholds);

/// Users clustered over their full service-invocation rows.
Partition cluster_users(const QosMatrix& matrix,
                        const std::vector<GeoContext>* contexts,
                        const ThresholdSet& thresholds);

/// Services clustered with similarity restricted to the given user rows,
/// mirroring the second-level step of the forest build.
Partition cluster_services_within(const Cluster& user_cluster, const QosMatrix& matrix,
                                  const std::vector<GeoContext>* service_contexts,
                                  double tau, Index n_min);

/// Attach each leftover entity to the cluster holding its most similar
/// member (max over members of cosine similarity); ties go to the lowest
/// cluster id. Pure similarity rule; context placement of no-record entities
/// happens in the forest build.
void assign_residuals(Partition& partition, const std::vector<Index>& leftovers,
                      const Matrix& entity_vectors);

/// First-level cluster whose nearest member minimizes Haversine distance;
/// ties go to the lowest cluster id. For brand-new entities with no QoS
/// record. `axis_contexts` are the contexts of the forest's first-axis
/// entities.
int assign_new_entity(const GeoContext& entity_context, const ClusterForest& forest,
                      const std::vector<GeoContext>& axis_contexts);

/// Build both forests from one matrix. UICL clusters users then services;
/// SICL clusters services then users. All thresholds derive from tau; n_min
/// applies to both axes.
ForestPair build_forest(const QosMatrix& matrix,
                        const std::vector<GeoContext>* user_contexts,
                        const std::vector<GeoContext>* service_contexts, double tau,
                        Index n_min);

std::string forest_to_json(const ClusterForest& forest);
ClusterForest forest_from_json(const std::string& text, Index n_first_axis,
                               Index n_second_axis);

void save_forest(const std::filesystem::path& file, const ClusterForest& forest);
ClusterForest load_forest(const std::filesystem::path& file, Index n_first_axis,
                          Index n_second_axis);

}  // namespace fes

#endif  // FES_CLUSTERING_HPP
