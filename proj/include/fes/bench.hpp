#ifndef FES_BENCH_HPP
#define FES_BENCH_HPP

#include "fes/engine.hpp"
#include "fes/synth.hpp"
#include "fes/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fes {

double mae(const std::vector<double>& predicted, const std::vector<double>& actual);

/// Shared experiment setup. An empty dataset_dir selects the built-in
/// synthetic workload (synth); otherwise the directory is loaded as a
/// WS-DREAM style dataset and, unless full_scale is set, cut down to a desk
/// slice of at most 150 users x 1000 services.
struct ExperimentConfig {
  std::filesystem::path dataset_dir;
  QosKind qos_kind = QosKind::RT;
  SynthSpec synth;

  std::vector<double> train_fractions{0.1};
  double tau = 0.5;
  Index n_min = 2;
  Index runs = 5;
  std::vector<std::uint64_t> seeds;  // auto-derived from seed when empty
  std::uint64_t seed = 1;
  bool wocc = false;
  Index feature_cap = 0;
  bool full_scale = false;
  std::filesystem::path out_path;  // empty = no CSV written

  MfParams mf;
  Index s1_max_epochs = 50;
  Index s2_max_epochs = 5000;
  Index s2_samples = 400;
  Index eval_cells = 150;  // test cells scored per run
  double drift_threshold = 0.0398;

  /// runs seeds: the explicit list, or seed-derived ones.
  std::vector<std::uint64_t> effective_seeds() const;
};

/// One output record. mean_latency stays exactly 0 in experiments whose CSVs
/// must be bit-reproducible; only the responsiveness/scalability families and
/// the stage-1 epoch sweep carry wall-clock columns.
struct MetricRow {
  std::string experiment;
  std::string config_echo;
  double mae = 0.0;
  double mean_latency = 0.0;
  std::vector<std::pair<std::string, double>> extras;
};

/// Self-describing CSV: "# " comment lines, a header, then the rows. All
/// rows must share the same extra-column keys.
void write_csv(const std::filesystem::path& file, const std::vector<std::string>& notes,
               const std::vector<MetricRow>& rows);

/// Full pipeline per (fraction, seed): FES MAE next to the column-mean,
/// CF-only, and MF-only baselines and the plain mean of the four stage-1
/// outputs, all scored on the identical test cells. Adds one averaged row per
/// fraction.
std::vector<MetricRow> run_accuracy(const ExperimentConfig& config);

/// Wall-clock per prediction over >= 100 sampled test queries, plus the
/// offline build time and the build/predict ratio.
std::vector<MetricRow> run_responsiveness(const ExperimentConfig& config);

/// Augment the base workload by each factor, retrain, and compare mean
/// per-query time against the 1x run.
std::vector<MetricRow> run_scalability(const ExperimentConfig& config,
                                       const std::vector<Index>& factors);

/// Mask a fraction of users to zero rows, rebuild, and score only the masked
/// users' test cells against the same cells under the unmasked build.
std::vector<MetricRow> run_cold_start(const ExperimentConfig& config,
                                      double mask_fraction);

enum class SweepParam { Tau, S2Samples, S2Epochs, S1Epochs };

const char* to_string(SweepParam p);

/// One pipeline per value (averaged over the configured runs). The stage-1
/// epoch sweep also reports latency, since that knob is paid at query time.
std::vector<MetricRow> run_sweep(const ExperimentConfig& config, SweepParam parameter,
                                 const std::vector<double>& values);

/// Train once at the first schedule density, then grow the log step by step:
/// fills are refreshed from the denser log while the fusion net stays frozen.
/// Each step scores a fixed held-out set and runs the drift check; a final
/// row shows the same step after a full retrain.
std::vector<MetricRow> run_drift(const ExperimentConfig& config,
                                 const std::vector<double>& density_schedule);

}  // namespace fes

#endif  // FES_BENCH_HPP
