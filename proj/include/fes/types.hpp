#ifndef FES_TYPES_HPP
#define FES_TYPES_HPP

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fes {

using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised for malformed or inconsistent input data (maps to exit code 3 in the CLI).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for invalid configuration or arguments (maps to exit code 2 in the CLI).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class QosKind { RT, TP };

inline const char* to_string(QosKind k) { return k == QosKind::RT ? "rt" : "tp"; }

/// Dense user x service invocation log. An entry of 0 means "never invoked";
/// every observed value is strictly positive in the supported datasets.
struct QosMatrix {
  Matrix values;  // n_users x n_services

  QosMatrix() = default;
  explicit QosMatrix(Matrix v) : values(std::move(v)) {}
  QosMatrix(Index users, Index services) : values(Matrix::Zero(users, services)) {}

  Index n_users() const { return values.rows(); }
  Index n_services() const { return values.cols(); }

  bool valid(Index u, Index s) const { return values(u, s) > 0.0; }

  Index valid_count() const { return (values.array() > 0.0).count(); }

  double density() const {
    const Index total = values.size();
    return total == 0 ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(total);
  }
};

/// Geographic context as (latitude, longitude) in degrees.
struct GeoContext {
  double latitude = 0.0;
  double longitude = 0.0;

  GeoContext() = default;
  GeoContext(double lat, double lon) : latitude(lat), longitude(lon) {
    if (lat < -90.0 || lat > 90.0)
      throw DataError("latitude out of range [-90, 90]: " + std::to_string(lat));
    if (lon < -180.0 || lon > 180.0)
      throw DataError("longitude out of range [-180, 180]: " + std::to_string(lon));
  }
};

/// A matrix plus optional per-row/per-column location contexts.
/// Missing contexts put the pipeline in WoCC mode (context-aware clustering skipped).
struct DatasetBundle {
  QosMatrix matrix;
  std::vector<GeoContext> user_contexts;     // empty or size n_users
  std::vector<GeoContext> service_contexts;  // empty or size n_services
  QosKind qos_kind = QosKind::RT;

  bool has_contexts() const { return !user_contexts.empty() && !service_contexts.empty(); }

  void check() const {
    if (!user_contexts.empty() &&
        static_cast<Index>(user_contexts.size()) != matrix.n_users())
      throw DataError("user context count does not match matrix rows");
    if (!service_contexts.empty() &&
        static_cast<Index>(service_contexts.size()) != matrix.n_services())
      throw DataError("service context count does not match matrix columns");
  }
};

/// Train fraction of the valid entries; the remainder is split validation:test = 1:2.
struct SplitSpec {
  double train_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct Cell {
  Index user = 0;
  Index service = 0;
  Scalar value = 0.0;

  friend bool operator==(const Cell& a, const Cell& b) {
    return a.user == b.user && a.service == b.service && a.value == b.value;
  }
};

using IndexedCells = std::vector<Cell>;

}  // namespace fes

#endif  // FES_TYPES_HPP
