#include "fes/clustering.hpp"

#include "fes/hash.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace fes {

using nlohmann::json;

bool Cluster::contains(Index id) const {
  return std::binary_search(member_ids.begin(), member_ids.end(), id);
}

namespace {

// Transitive closure of {seed} under pred, growing only over entities not yet
// absorbed into an accepted cluster. Residual entities stay eligible.
std::vector<char> grow_closure(Index n, Index seed, const std::vector<char>& taken,
                               const std::function<bool(Index, Index)>& joins) {
  std::vector<char> in_set(static_cast<std::size_t>(n), 0);
  in_set[static_cast<std::size_t>(seed)] = 1;
  std::vector<Index> frontier{seed};
  while (!frontier.empty()) {
    std::vector<Index> next;
    for (Index j : frontier) {
      for (Index k = 0; k < n; ++k) {
        if (taken[static_cast<std::size_t>(k)] || in_set[static_cast<std::size_t>(k)])
          continue;
        if (joins(j, k)) {
          in_set[static_cast<std::size_t>(k)] = 1;
          next.push_back(k);
        }
      }
    }
    frontier = std::move(next);
  }
  return in_set;
}

std::vector<Index> members_of(const std::vector<char>& flags) {
  std::vector<Index> ids;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) ids.push_back(static_cast<Index>(i));
  return ids;
}

int nearest_cluster_by_context(const GeoContext& ctx,
                               const std::vector<Cluster>& clusters,
                               const std::vector<GeoContext>& axis_contexts) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < clusters.size(); ++k)
    for (Index m : clusters[k].member_ids) {
      const double d = haversine(ctx, axis_contexts[static_cast<std::size_t>(m)]);
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<int>(k);
      }
    }
  return best;
}

}  // namespace

Partition cluster_entities(const Matrix& entity_vectors,
                           const std::vector<GeoContext>* contexts,
                           const ThresholdSet& thr) {
  const Index n = entity_vectors.cols();
  if (n == 0) throw DataError("cannot cluster an empty entity set");

  Partition out;
  if (n == 1) {
    out.clusters.push_back({{0}});
    return out;
  }
  if (contexts && static_cast<Index>(contexts->size()) != n)
    throw DataError("context count does not match entity count");

  const Matrix sim = pairwise_cosine(entity_vectors);

  std::vector<char> taken(static_cast<std::size_t>(n), 0);   // in an accepted cluster
  std::vector<char> residual(static_cast<std::size_t>(n), 0);
  Index n_taken = 0, n_residual = 0;

  for (Index seed = 0; seed < n; ++seed) {
    if (taken[static_cast<std::size_t>(seed)] || residual[static_cast<std::size_t>(seed)])
      continue;
    // Before a candidate exists the break check can only use the n_min floor.
    if (n - (n_taken + n_residual) <= thr.n_min) break;

    std::vector<char> cand;
    Index grown_size = 0;
    std::vector<char> sim_set = grow_closure(
        n, seed, taken,
        [&](Index j, Index k) { return sim(j, k) >= thr.t_similarity; });
    if (contexts) {
      std::vector<char> ctx_set = grow_closure(n, seed, taken, [&](Index j, Index k) {
        return haversine((*contexts)[static_cast<std::size_t>(j)],
                         (*contexts)[static_cast<std::size_t>(k)]) <= thr.t_context;
      });
      grown_size = static_cast<Index>(std::count(ctx_set.begin(), ctx_set.end(), 1));
      cand.resize(static_cast<std::size_t>(n), 0);
      for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = ctx_set[i] && sim_set[i];
    } else {
      // WoCC: the candidate is the similarity growth itself.
      cand = std::move(sim_set);
      grown_size = static_cast<Index>(std::count(cand.begin(), cand.end(), 1));
    }

    const Index cand_size = static_cast<Index>(std::count(cand.begin(), cand.end(), 1));
    const Index accept_at = context_sensitive_threshold(thr.n_min, thr.tau, grown_size);
    if (cand_size >= accept_at) {
      out.clusters.push_back({members_of(cand)});
      for (Index i = 0; i < n; ++i)
        if (cand[static_cast<std::size_t>(i)]) taken[static_cast<std::size_t>(i)] = 1;
      n_taken += cand_size;
    } else {
      residual[static_cast<std::size_t>(seed)] = 1;
      ++n_residual;
    }
  }

  std::vector<Index> leftovers;
  for (Index i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) leftovers.push_back(i);

  if (out.clusters.empty()) {
    // Nothing passed acceptance; downstream stages need at least one cluster.
    out.fallback = true;
    out.clusters.push_back({std::move(leftovers)});
    return out;
  }

  std::vector<Index> by_similarity;
  for (Index i : leftovers) {
    const bool no_record = entity_vectors.col(i).isZero(0.0);
    if (no_record && contexts) {
      // No behavioral evidence; place by nearest context, like a new entity.
      const int k = nearest_cluster_by_context((*contexts)[static_cast<std::size_t>(i)],
                                               out.clusters, *contexts);
      out.clusters[static_cast<std::size_t>(k)].member_ids.push_back(i);
    } else {
      by_similarity.push_back(i);
    }
  }
  assign_residuals(out, by_similarity, entity_vectors);

  for (auto& c : out.clusters)
    std::sort(c.member_ids.begin(), c.member_ids.end());
  return out;
}

void assign_residuals(Partition& partition, const std::vector<Index>& leftovers,
                      const Matrix& entity_vectors) {
  if (partition.clusters.empty())
    throw DataError("assign_residuals requires at least one formed cluster");
  for (Index i : leftovers) {
    double best_sim = 0.0;
    std::size_t best = 0;
    for (std::size_t k = 0; k < partition.clusters.size(); ++k) {
      double cluster_sim = 0.0;
      for (Index m : partition.clusters[k].member_ids)
        cluster_sim = std::max(cluster_sim,
                               cosine_sim(entity_vectors.col(i), entity_vectors.col(m)));
      if (best_sim < cluster_sim) {
        best_sim = cluster_sim;
        best = k;
      }
    }
    partition.clusters[best].member_ids.push_back(i);
  }
  for (auto& c : partition.clusters)
    std::sort(c.member_ids.begin(), c.member_ids.end());
}

Partition cluster_users(const QosMatrix& matrix,
                        const std::vector<GeoContext>* contexts,
                        const ThresholdSet& thresholds) {
  const Matrix user_vectors = matrix.values.transpose();
  return cluster_entities(user_vectors, contexts, thresholds);
}

Partition cluster_services_within(const Cluster& user_cluster, const QosMatrix& matrix,
                                  const std::vector<GeoContext>* service_contexts,
                                  double tau, Index n_min) {
  Matrix restricted(user_cluster.size(), matrix.n_services());
  for (Index r = 0; r < user_cluster.size(); ++r)
    restricted.row(r) = matrix.values.row(user_cluster.member_ids[static_cast<std::size_t>(r)]);

  ThresholdSet thr;
  thr.tau = tau;
  thr.n_min = n_min;
  if (matrix.n_services() >= 2)
    thr.t_similarity = derive_similarity_threshold(pairwise_cosine(restricted), tau);
  if (service_contexts)
    thr.t_context = derive_context_threshold(*service_contexts, tau);
  return cluster_entities(restricted, service_contexts, thr);
}

int assign_new_entity(const GeoContext& entity_context, const ClusterForest& forest,
                      const std::vector<GeoContext>& axis_contexts) {
  if (axis_contexts.empty())
    throw DataError("cold-start assignment unavailable without context");
  return nearest_cluster_by_context(entity_context, forest.first_level, axis_contexts);
}

namespace {

// One forest: first-level clustering of `first_vectors`, then per first-level
// cluster a second-level clustering with similarity restricted to that
// cluster's slice of the matrix.
ClusterForest build_one_forest(ForestMode mode, const QosMatrix& matrix,
                               const std::vector<GeoContext>* first_contexts,
                               const std::vector<GeoContext>* second_contexts,
                               double tau, Index n_min) {
  const bool users_first = mode == ForestMode::UICL;
  const Index n_first = users_first ? matrix.n_users() : matrix.n_services();
  const Index n_second = users_first ? matrix.n_services() : matrix.n_users();

  ClusterForest forest;
  forest.mode = mode;
  forest.tau = tau;
  forest.n_min = n_min;
  forest.source_hash = matrix_hash(matrix.values);

  const Matrix first_vectors =
      users_first ? Matrix(matrix.values.transpose()) : matrix.values;

  ThresholdSet thr;
  thr.tau = tau;
  thr.n_min = n_min;
  if (n_first >= 2)
    thr.t_similarity = derive_similarity_threshold(pairwise_cosine(first_vectors), tau);
  if (first_contexts && n_first >= 2)
    thr.t_context = derive_context_threshold(*first_contexts, tau);
  forest.first_thresholds = thr;
  if (second_contexts && n_second >= 2)
    forest.second_context_threshold = derive_context_threshold(*second_contexts, tau);

  Partition first = cluster_entities(first_vectors, first_contexts, thr);
  forest.fallback_first = first.fallback;
  forest.first_level = std::move(first.clusters);

  for (const auto& fc : forest.first_level) {
    // Second-axis vectors over this cluster's rows/columns only.
    Matrix restricted(fc.size(), n_second);
    for (Index r = 0; r < fc.size(); ++r) {
      const Index id = fc.member_ids[static_cast<std::size_t>(r)];
      if (users_first)
        restricted.row(r) = matrix.values.row(id);
      else
        restricted.row(r) = matrix.values.col(id).transpose();
    }
    ThresholdSet thr2;
    thr2.tau = tau;
    thr2.n_min = n_min;
    thr2.t_context = forest.second_context_threshold;
    if (n_second >= 2)
      thr2.t_similarity = derive_similarity_threshold(pairwise_cosine(restricted), tau);
    forest.second_sim_thresholds.push_back(thr2.t_similarity);
    Partition second = cluster_entities(restricted, second_contexts, thr2);
    forest.second_level.push_back(std::move(second.clusters));
  }

  forest.rebuild_lookup(n_first, n_second);
  return forest;
}

}  // namespace

ForestPair build_forest(const QosMatrix& matrix,
                        const std::vector<GeoContext>* user_contexts,
                        const std::vector<GeoContext>* service_contexts, double tau,
                        Index n_min) {
  if (matrix.n_users() == 0 || matrix.n_services() == 0)
    throw DataError("cannot build forests over an empty matrix");
  if (tau < 0.0 || tau >= 1.0) throw ConfigError("tau must lie in [0, 1)");
  if (n_min < 1) throw ConfigError("n_min must be >= 1");
  if ((user_contexts == nullptr) != (service_contexts == nullptr))
    throw ConfigError("context-aware clustering needs both user and service contexts");

  ForestPair pair;
  pair.uicl = build_one_forest(ForestMode::UICL, matrix, user_contexts,
                               service_contexts, tau, n_min);
  pair.sicl = build_one_forest(ForestMode::SICL, matrix, service_contexts,
                               user_contexts, tau, n_min);
  return pair;
}

std::pair<int, int> ClusterForest::pair_index(Index user, Index service) const {
  const Index first_axis = mode == ForestMode::UICL ? user : service;
  const Index second_axis = mode == ForestMode::UICL ? service : user;
  if (first_axis < 0 || first_axis >= static_cast<Index>(first_of.size()))
    throw DataError("pair_index: first-axis id out of range");
  const int f = first_of[static_cast<std::size_t>(first_axis)];
  const auto& snd = second_of[static_cast<std::size_t>(f)];
  if (second_axis < 0 || second_axis >= static_cast<Index>(snd.size()))
    throw DataError("pair_index: second-axis id out of range");
  return {f, snd[static_cast<std::size_t>(second_axis)]};
}

std::pair<const std::vector<Index>&, const std::vector<Index>&>
ClusterForest::multilevel_members(int first_id, int second_id) const {
  const auto& first = first_level[static_cast<std::size_t>(first_id)].member_ids;
  const auto& second =
      second_level[static_cast<std::size_t>(first_id)][static_cast<std::size_t>(second_id)]
          .member_ids;
  if (mode == ForestMode::UICL) return {first, second};
  return {second, first};
}

Index ClusterForest::multilevel_count() const {
  Index total = 0;
  for (const auto& sl : second_level) total += static_cast<Index>(sl.size());
  return total;
}

void ClusterForest::rebuild_lookup(Index n_first_axis, Index n_second_axis) {
  first_of.assign(static_cast<std::size_t>(n_first_axis), -1);
  for (std::size_t k = 0; k < first_level.size(); ++k)
    for (Index m : first_level[k].member_ids)
      first_of[static_cast<std::size_t>(m)] = static_cast<int>(k);
  if (std::find(first_of.begin(), first_of.end(), -1) != first_of.end())
    throw DataError("first-level clusters do not cover every entity");

  second_of.assign(first_level.size(), {});
  for (std::size_t k = 0; k < first_level.size(); ++k) {
    auto& tbl = second_of[k];
    tbl.assign(static_cast<std::size_t>(n_second_axis), -1);
    for (std::size_t c = 0; c < second_level[k].size(); ++c)
      for (Index m : second_level[k][c].member_ids)
        tbl[static_cast<std::size_t>(m)] = static_cast<int>(c);
    if (std::find(tbl.begin(), tbl.end(), -1) != tbl.end())
      throw DataError("second-level clusters do not cover every entity");
  }
}

std::uint64_t ClusterForest::fingerprint() const {
  std::ostringstream os;
  os << to_string(mode) << '|' << tau << '|' << n_min << '|' << to_hex(source_hash);
  for (const auto& c : first_level) {
    os << "\nF:";
    for (Index m : c.member_ids) os << m << ',';
  }
  for (const auto& sl : second_level)
    for (const auto& c : sl) {
      os << "\nS:";
      for (Index m : c.member_ids) os << m << ',';
    }
  return fnv1a(os.str());
}

std::uint64_t ForestPair::fingerprint() const {
  const std::uint64_t a = uicl.fingerprint();
  const std::uint64_t b = sicl.fingerprint();
  std::uint64_t h = fnv1a(&a, sizeof(a));
  return fnv1a(&b, sizeof(b), h);
}

namespace {

json cluster_to_json(const Cluster& c) { return json(c.member_ids); }

Cluster cluster_from_json(const json& j) {
  Cluster c;
  c.member_ids = j.get<std::vector<Index>>();
  return c;
}

}  // namespace

std::string forest_to_json(const ClusterForest& forest) {
  json j;
  j["version"] = 1;
  j["mode"] = to_string(forest.mode);
  j["tau"] = forest.tau;
  j["n_min"] = forest.n_min;
  j["source_hash"] = to_hex(forest.source_hash);
  j["fallback_first"] = forest.fallback_first;
  j["thresholds"] = {{"t_context", forest.first_thresholds.t_context},
                     {"t_similarity", forest.first_thresholds.t_similarity},
                     {"second_t_context", forest.second_context_threshold},
                     {"second_t_similarity", forest.second_sim_thresholds}};
  json first = json::array();
  for (const auto& c : forest.first_level) first.push_back(cluster_to_json(c));
  j["first_level"] = std::move(first);
  json second = json::array();
  for (const auto& sl : forest.second_level) {
    json level = json::array();
    for (const auto& c : sl) level.push_back(cluster_to_json(c));
    second.push_back(std::move(level));
  }
  j["second_level"] = std::move(second);
  return j.dump(2);
}

ClusterForest forest_from_json(const std::string& text, Index n_first_axis,
                               Index n_second_axis) {
  json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw DataError("unsupported forest file version");
  ClusterForest forest;
  forest.mode =
      j.at("mode").get<std::string>() == "uicl" ? ForestMode::UICL : ForestMode::SICL;
  forest.tau = j.at("tau").get<double>();
  forest.n_min = j.at("n_min").get<Index>();
  forest.source_hash = from_hex(j.at("source_hash").get<std::string>());
  forest.fallback_first = j.at("fallback_first").get<bool>();
  const auto& thr = j.at("thresholds");
  forest.first_thresholds.tau = forest.tau;
  forest.first_thresholds.n_min = forest.n_min;
  forest.first_thresholds.t_context = thr.at("t_context").get<double>();
  forest.first_thresholds.t_similarity = thr.at("t_similarity").get<double>();
  forest.second_context_threshold = thr.at("second_t_context").get<double>();
  forest.second_sim_thresholds =
      thr.at("second_t_similarity").get<std::vector<double>>();
  for (const auto& c : j.at("first_level")) forest.first_level.push_back(cluster_from_json(c));
  for (const auto& sl : j.at("second_level")) {
    std::vector<Cluster> level;
    for (const auto& c : sl) level.push_back(cluster_from_json(c));
    forest.second_level.push_back(std::move(level));
  }
  forest.rebuild_lookup(n_first_axis, n_second_axis);
  return forest;
}

void save_forest(const std::filesystem::path& file, const ClusterForest& forest) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write forest file: " + file.string());
  out << forest_to_json(forest) << '\n';
}

ClusterForest load_forest(const std::filesystem::path& file, Index n_first_axis,
                          Index n_second_axis) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open forest file: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return forest_from_json(ss.str(), n_first_axis, n_second_axis);
}

}  // namespace fes
