#ifndef FES_DATASET_HPP
#define FES_DATASET_HPP

#include "fes/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fes {

struct SplitResult {
  QosMatrix train;    // same shape as input, non-train valid entries zeroed
  IndexedCells val;
  IndexedCells test;
};

/// Load a WS-DREAM style dataset directory.
///
/// Expected layout: a matrix file named "<qos>Matrix.txt" (e.g. rtMatrix.txt)
/// or "matrix.txt", whitespace-separated reals, one user per line. Negative
/// values are the raw "never invoked" sentinel and are mapped to 0. Optional
/// "users.txt" / "services.txt" hold one "id<TAB>lat<TAB>lon" record per line
/// (extra columns ignored); both must be present for context-aware mode.
DatasetBundle load_wsdream(const std::filesystem::path& dir, QosKind kind);

/// Write a matrix in the same whitespace format load_wsdream reads.
/// Values round-trip bit-exactly.
void write_matrix_file(const std::filesystem::path& file, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& file);

void write_context_file(const std::filesystem::path& file,
                        const std::vector<GeoContext>& contexts);
std::vector<GeoContext> read_context_file(const std::filesystem::path& file);

/// Canonical sparse export: CSV with header "user,service,value".
void export_triples_csv(const std::filesystem::path& file, const QosMatrix& m);
QosMatrix import_triples_csv(const std::filesystem::path& file, Index n_users,
                             Index n_services);

/// Keep floor(train_fraction * valid) entries for training; split the rest
/// 1:2 into validation and test by a seeded uniform draw. The three parts are
/// disjoint and together cover every valid entry.
SplitResult split(const DatasetBundle& bundle, const SplitSpec& spec);

/// Zero out a seeded selection of floor(fraction * n) whole rows or columns,
/// simulating brand-new users/services. Returns the masked ids, ascending.
std::pair<QosMatrix, std::vector<Index>> mask_cold_start(const QosMatrix& matrix,
                                                         bool mask_users,
                                                         double fraction,
                                                         std::uint64_t seed);

/// Scale a bundle up by replicating rows/columns blockwise. The original
/// block is kept exact; replicas get multiplicative jitter on valid entries
/// (uniform in [1-jitter, 1+jitter]) and small coordinate jitter on contexts,
/// so they stay correlated with the originals without being identical.
DatasetBundle augment(const DatasetBundle& bundle, Index user_factor,
                      Index service_factor, std::uint64_t seed,
                      double jitter = 0.05);

}  // namespace fes

#endif  // FES_DATASET_HPP
