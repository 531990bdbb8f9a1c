#ifndef FES_ENGINE_HPP
#define FES_ENGINE_HPP

#include "fes/clustering.hpp"
#include "fes/imputation.hpp"
#include "fes/neuralreg.hpp"
#include "fes/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

namespace fes {

struct Query {
  Index user = 0;
  Index service = 0;
};

struct PredictionResult {
  double value = 0.0;
  std::array<double, 4> stage1{};
  double latency_s = 0.0;           // online work only: lookup + stage-1 + fusion
  std::pair<int, int> uicl_cluster{-1, -1};
  std::pair<int, int> sicl_cluster{-1, -1};
};

struct DriftReport {
  double density_at_train = 0.0;
  double density_now = 0.0;
  double recent_mae = 0.0;
  double threshold = 0.0;
  bool retrain_recommended = false;
};

/// Window MAE against the acceptable-error threshold. Densities are optional
/// annotations for callers that track them.
DriftReport drift_check(const std::vector<double>& recent_errors, double threshold,
                        double density_at_train = 0.0, double density_now = 0.0);

struct EngineConfig {
  double tau = 0.5;
  Index n_min = 2;
  bool use_contexts = true;  // false = similarity-only clustering
  MfParams mf;
  MlpSpec spec1;  // input size filled per query matrix
  MlpSpec spec2;
  Index s2_samples = 2000;
  Index feature_cap = 0;
  double drift_threshold = 0.0398;
  std::uint64_t seed = 1;
};

/// Everything predict() reads, swapped as one unit so concurrent readers
/// always see a matching (forests, store, model) triple.
struct Artifacts {
  ForestPair forests;
  PreprocessedStore store;
  FusedModel model;
  double density_at_train = 0.0;

  std::uint64_t fingerprint() const;
};

/// The semi-offline runtime. Training (construction, retrain) is the offline
/// half; predict() runs only the online half against immutable artifacts.
/// Observations accumulate in a live log that nothing reads until the next
/// retrain.
class Engine {
 public:
  Engine(DatasetBundle log, EngineConfig config);
  static Engine load(const std::filesystem::path& dir);

  // Movable so load() can hand the engine out; the mutexes start fresh.
  Engine(Engine&& other) noexcept;
  Engine& operator=(Engine&&) = delete;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void save(const std::filesystem::path& dir) const;

  PredictionResult predict(const Query& query) const;
  void observe(Index user, Index service, double value);
  DriftReport drift_check(const std::vector<double>& recent_errors) const;

  /// Full offline rebuild from the live log; atomically replaces artifacts.
  void retrain();

  /// Rebuild clustering and fills from the live log while keeping the trained
  /// fusion net. Leaves the model's forest hash stale on purpose; used to
  /// study how a frozen stage-2 ages as the log grows.
  void refresh_fills();

  double density_now() const;
  double density_at_train() const;
  std::uint64_t artifact_fingerprint() const;
  bool stage2_is_stale() const { return stale_stage2_; }
  const EngineConfig& config() const { return config_; }
  QosMatrix log_matrix() const;
  std::shared_ptr<const Artifacts> snapshot() const;

 private:
  Engine(DatasetBundle log, EngineConfig config, bool defer_training);

  static std::shared_ptr<const Artifacts> build_artifacts(const DatasetBundle& log,
                                                          const EngineConfig& config);

  EngineConfig config_;
  DatasetBundle log_;
  bool stale_stage2_ = false;

  mutable std::mutex log_mutex_;
  mutable std::mutex artifacts_mutex_;
  std::shared_ptr<const Artifacts> artifacts_;
};

}  // namespace fes

#endif  // FES_ENGINE_HPP
