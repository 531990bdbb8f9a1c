#ifndef FES_IMPUTATION_HPP
#define FES_IMPUTATION_HPP

#include "fes/clustering.hpp"
#include "fes/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fes {

struct MfParams {
  Index rank = 10;
  double reg = 0.01;
  double lr = 0.005;
  Index epochs = 200;
  std::uint64_t seed = 0;
};

/// Dense fill of one multi-level cluster's sub-matrix, with the id maps back
/// to the global axes. Every entry is positive once filled.
struct FilledMatrix {
  Matrix values;
  std::vector<Index> row_ids;  // global user ids, ascending
  std::vector<Index> col_ids;  // global service ids, ascending

  Index row_pos(Index global_user) const;
  Index col_pos(Index global_service) const;
};

/// The four matrices resolved for one (user, service) query: the user-side
/// cluster filled by CF and by MF, and the service-side cluster likewise.
struct FilledQuad {
  const FilledMatrix* q_u_c = nullptr;
  const FilledMatrix* q_u_m = nullptr;
  const FilledMatrix* q_s_c = nullptr;
  const FilledMatrix* q_s_m = nullptr;
};

/// Fill missing cells by user-based collaborative filtering: for each hole,
/// the similarity-weighted mean over the top_k most similar users that rated
/// that column, falling back to user mean, then column mean, then global
/// mean. Valid cells pass through untouched, bit for bit.
QosMatrix cf_fill(const QosMatrix& sub, Index top_k = 10);

/// Fill by rank-constrained factorization fit with SGD on the valid cells.
/// Valid cells are overwritten with their true values afterwards; the
/// reconstruction is floored at 1e-6 so no cell can read as missing. When
/// epoch_objective is given it receives the end-of-epoch training objective
/// (squared error on valid cells plus the L2 penalty).
QosMatrix mf_fill(const QosMatrix& sub, const MfParams& params,
                  std::vector<double>* epoch_objective = nullptr);

struct StoreEntry {
  FilledMatrix cf;
  FilledMatrix mf;
};

/// All fills for both forests, indexed by (mode, first-level id, second-level
/// id). Built once per training matrix; read-only afterwards.
class PreprocessedStore {
 public:
  std::uint64_t forest_hash = 0;  // ForestPair fingerprint this was built for
  MfParams mf_params;

  const StoreEntry& entry(ForestMode mode, int first_id, int second_id) const;
  StoreEntry& slot(ForestMode mode, int first_id, int second_id);
  void shape_from(const ForestPair& forests);

  /// Resolve a pair to its four matrices via the forests' cluster lookup.
  FilledQuad lookup(const ForestPair& forests, Index user, Index service) const;

  /// Total stored cells across every matrix; equals twice the summed
  /// multi-level cluster areas of both forests.
  Index total_cells() const;

  /// Content digest over every stored matrix; used to prove prediction paths
  /// never write here.
  std::uint64_t fingerprint() const;

  const std::array<std::vector<std::vector<StoreEntry>>, 2>& modes() const {
    return entries_;
  }

 private:
  // entries_[0] follows the user-first forest, entries_[1] the service-first.
  std::array<std::vector<std::vector<StoreEntry>>, 2> entries_;
};

/// Run both fills over every multi-level cluster of both forests. Cluster
/// sub-matrices with no valid cells at all are filled with the global mean of
/// `matrix` (nothing local to anchor on).
PreprocessedStore preprocess_all(const QosMatrix& matrix, const ForestPair& forests,
                                 const MfParams& mf);

/// Like preprocess_all, but persists each fill under `dir` as it completes
/// and reuses any persisted fill whose manifest entry still matches the
/// forest fingerprint and parameters, so an interrupted run resumes instead
/// of starting over.
PreprocessedStore preprocess_resumable(const std::filesystem::path& dir,
                                       const QosMatrix& matrix,
                                       const ForestPair& forests, const MfParams& mf);

void save_store(const std::filesystem::path& dir, const PreprocessedStore& store);
PreprocessedStore load_store(const std::filesystem::path& dir,
                             const ForestPair& forests);

}  // namespace fes

#endif  // FES_IMPUTATION_HPP
