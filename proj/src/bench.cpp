#include "fes/bench.hpp"

#include "fes/dataset.hpp"
#include "fes/imputation.hpp"
#include "fes/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fes {

double mae(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.empty()) throw ConfigError("mae over an empty set");
  if (predicted.size() != actual.size())
    throw ConfigError("mae: prediction and truth counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    sum += std::abs(predicted[i] - actual[i]);
  return sum / static_cast<double>(predicted.size());
}

std::vector<std::uint64_t> ExperimentConfig::effective_seeds() const {
  if (!seeds.empty()) return seeds;
  if (runs < 1) throw ConfigError("experiment needs at least one run");
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(runs));
  for (Index i = 0; i < runs; ++i)
    out.push_back(mix_seed(seed, 0xb000 + static_cast<std::uint64_t>(i)));
  return out;
}

const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::Tau: return "tau";
    case SweepParam::S2Samples: return "s2_samples";
    case SweepParam::S2Epochs: return "s2_epochs";
    case SweepParam::S1Epochs: return "s1_epochs";
  }
  return "?";
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr Index kDeskUsers = 150;
constexpr Index kDeskServices = 1000;

DatasetBundle desk_slice(DatasetBundle b, Index max_users, Index max_services) {
  const Index nu = std::min(max_users, b.matrix.n_users());
  const Index ns = std::min(max_services, b.matrix.n_services());
  if (nu == b.matrix.n_users() && ns == b.matrix.n_services()) return b;
  DatasetBundle out;
  out.qos_kind = b.qos_kind;
  out.matrix = QosMatrix(Matrix(b.matrix.values.topLeftCorner(nu, ns)));
  if (!b.user_contexts.empty())
    out.user_contexts.assign(b.user_contexts.begin(),
                             b.user_contexts.begin() + nu);
  if (!b.service_contexts.empty())
    out.service_contexts.assign(b.service_contexts.begin(),
                                b.service_contexts.begin() + ns);
  return out;
}

DatasetBundle bench_dataset(const ExperimentConfig& c) {
  DatasetBundle b = c.dataset_dir.empty() ? make_synthetic(c.synth)
                                          : load_wsdream(c.dataset_dir, c.qos_kind);
  if (!c.full_scale) b = desk_slice(std::move(b), kDeskUsers, kDeskServices);
  b.check();
  return b;
}

EngineConfig engine_config(const ExperimentConfig& c, std::uint64_t run_seed) {
  EngineConfig e;
  e.tau = c.tau;
  e.n_min = c.n_min;
  e.use_contexts = !c.wocc;
  e.mf = c.mf;
  e.spec1 = default_s1_spec(0);
  e.spec1.max_epochs = c.s1_max_epochs;
  e.spec2 = default_s2_spec(0);
  e.spec2.max_epochs = c.s2_max_epochs;
  e.s2_samples = c.s2_samples;
  e.feature_cap = c.feature_cap;
  e.drift_threshold = c.drift_threshold;
  e.seed = run_seed;
  return e;
}

std::string base_echo(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "dataset=" << (c.dataset_dir.empty() ? "synthetic" : c.dataset_dir.string())
     << ";qos=" << to_string(c.qos_kind) << ";tau=" << fmt(c.tau)
     << ";n_min=" << c.n_min << ";wocc=" << (c.wocc ? 1 : 0)
     << ";s2_samples=" << c.s2_samples << ";eval_cells=" << c.eval_cells
     << ";seed=" << c.seed;
  return os.str();
}

std::vector<std::string> csv_notes(const ExperimentConfig& c, const std::string& name,
                                   std::vector<std::string> extra = {}) {
  std::vector<std::string> notes;
  notes.push_back("fes bench csv v1");
  notes.push_back("experiment: " + name);
  notes.push_back("config: " + base_echo(c));
  for (auto& n : extra) notes.push_back(std::move(n));
  return notes;
}

struct RunOutcome {
  double fes_mae = 0.0;
  double s1mean_mae = 0.0;
  double cf_mae = 0.0;
  double mf_mae = 0.0;
  double colmean_mae = 0.0;
  double train_seconds = 0.0;
  double mean_latency = 0.0;
  double p95_latency = 0.0;
  Index n_eval = 0;
};

IndexedCells pick_eval_cells(const IndexedCells& test, Index want,
                             std::uint64_t seed) {
  if (test.empty()) throw DataError("no test cells available to evaluate on");
  Rng rng(seed);
  const auto idx = sample_indices(
      test.size(), static_cast<std::size_t>(std::min<Index>(
                       want, static_cast<Index>(test.size()))),
      rng);
  IndexedCells cells;
  cells.reserve(idx.size());
  for (std::size_t i : idx) cells.push_back(test[i]);
  return cells;
}

double percentile95(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t at =
      static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(xs.size()))) - 1;
  return xs[std::min(at, xs.size() - 1)];
}

// Column means of the valid train cells; empty columns get the global mean.
Vector column_mean_predictor(const QosMatrix& train) {
  const Index n = train.n_services();
  Vector mean = Vector::Zero(n), cnt = Vector::Zero(n);
  double global_sum = 0.0;
  for (Index u = 0; u < train.n_users(); ++u)
    for (Index s = 0; s < n; ++s)
      if (train.valid(u, s)) {
        mean(s) += train.values(u, s);
        cnt(s) += 1.0;
        global_sum += train.values(u, s);
      }
  const double global_mean =
      global_sum / std::max<double>(1.0, static_cast<double>(train.valid_count()));
  for (Index s = 0; s < n; ++s)
    mean(s) = cnt(s) > 0.0 ? mean(s) / cnt(s) : global_mean;
  return mean;
}

RunOutcome run_once(const DatasetBundle& data, double frac, std::uint64_t run_seed,
                    const ExperimentConfig& c, bool with_baselines) {
  SplitSpec sp;
  sp.train_fraction = frac;
  sp.seed = mix_seed(run_seed, 101);
  const SplitResult parts = split(data, sp);

  DatasetBundle train = data;
  train.matrix = parts.train;

  RunOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const Engine engine(train, engine_config(c, run_seed));
  out.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const IndexedCells eval =
      pick_eval_cells(parts.test, c.eval_cells, mix_seed(run_seed, 102));
  out.n_eval = static_cast<Index>(eval.size());

  std::vector<double> truth, fes_pred, s1mean_pred, latencies;
  truth.reserve(eval.size());
  for (const Cell& cell : eval) {
    const PredictionResult r = engine.predict({cell.user, cell.service});
    truth.push_back(cell.value);
    fes_pred.push_back(r.value);
    s1mean_pred.push_back((r.stage1[0] + r.stage1[1] + r.stage1[2] + r.stage1[3]) /
                          4.0);
    latencies.push_back(r.latency_s);
  }
  out.fes_mae = mae(fes_pred, truth);
  out.s1mean_mae = mae(s1mean_pred, truth);
  double lat_sum = 0.0;
  for (double l : latencies) lat_sum += l;
  out.mean_latency = lat_sum / static_cast<double>(latencies.size());
  out.p95_latency = percentile95(latencies);

  if (with_baselines) {
    const QosMatrix cf_filled = cf_fill(parts.train);
    MfParams mfp = c.mf;
    mfp.seed = mix_seed(run_seed, 103);
    const QosMatrix mf_filled = mf_fill(parts.train, mfp);
    const Vector col_mean = column_mean_predictor(parts.train);
    std::vector<double> cf_pred, mf_pred, col_pred;
    for (const Cell& cell : eval) {
      cf_pred.push_back(cf_filled.values(cell.user, cell.service));
      mf_pred.push_back(mf_filled.values(cell.user, cell.service));
      col_pred.push_back(col_mean(cell.service));
    }
    out.cf_mae = mae(cf_pred, truth);
    out.mf_mae = mae(mf_pred, truth);
    out.colmean_mae = mae(col_pred, truth);
  }
  return out;
}

void maybe_write(const ExperimentConfig& c, const std::vector<std::string>& notes,
                 const std::vector<MetricRow>& rows) {
  if (!c.out_path.empty()) write_csv(c.out_path, notes, rows);
}

}  // namespace

void write_csv(const std::filesystem::path& file, const std::vector<std::string>& notes,
               const std::vector<MetricRow>& rows) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write CSV: " + file.string());
  for (const auto& n : notes) out << "# " << n << '\n';
  out << "experiment,config,mae,mean_latency";
  if (!rows.empty())
    for (const auto& [key, value] : rows.front().extras) out << ',' << key;
  out << '\n';
  for (const auto& row : rows) {
    if (!rows.empty() && row.extras.size() != rows.front().extras.size())
      throw ConfigError("CSV rows disagree on their extra columns");
    for (std::size_t i = 0; i < row.extras.size(); ++i)
      if (row.extras[i].first != rows.front().extras[i].first)
        throw ConfigError("CSV rows disagree on their extra columns");
    out << row.experiment << ",\"" << row.config_echo << "\"," << fmt(row.mae) << ','
        << fmt(row.mean_latency);
    for (const auto& [key, value] : row.extras) out << ',' << fmt(value);
    out << '\n';
  }
}

std::vector<MetricRow> run_accuracy(const ExperimentConfig& config) {
  const DatasetBundle data = bench_dataset(config);
  const auto seeds = config.effective_seeds();
  std::vector<MetricRow> rows;

  for (double frac : config.train_fractions) {
    RunOutcome avg;
    for (std::uint64_t sd : seeds) {
      const RunOutcome o = run_once(data, frac, sd, config, true);
      MetricRow row;
      row.experiment = "accuracy";
      row.config_echo = "frac=" + fmt(frac) + ";seed=" + std::to_string(sd);
      row.mae = o.fes_mae;
      row.extras = {{"stage1_mean", o.s1mean_mae},
                    {"cf_only", o.cf_mae},
                    {"mf_only", o.mf_mae},
                    {"col_mean", o.colmean_mae},
                    {"n_eval", static_cast<double>(o.n_eval)}};
      rows.push_back(std::move(row));
      avg.fes_mae += o.fes_mae;
      avg.s1mean_mae += o.s1mean_mae;
      avg.cf_mae += o.cf_mae;
      avg.mf_mae += o.mf_mae;
      avg.colmean_mae += o.colmean_mae;
      avg.n_eval += o.n_eval;
    }
    const double n = static_cast<double>(seeds.size());
    MetricRow row;
    row.experiment = "accuracy_avg";
    row.config_echo = "frac=" + fmt(frac) + ";runs=" + std::to_string(seeds.size());
    row.mae = avg.fes_mae / n;
    row.extras = {{"stage1_mean", avg.s1mean_mae / n},
                  {"cf_only", avg.cf_mae / n},
                  {"mf_only", avg.mf_mae / n},
                  {"col_mean", avg.colmean_mae / n},
                  {"n_eval", static_cast<double>(avg.n_eval) / n}};
    rows.push_back(std::move(row));
  }
  maybe_write(config, csv_notes(config, "accuracy"), rows);
  return rows;
}

std::vector<MetricRow> run_responsiveness(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.eval_cells = std::max<Index>(config.eval_cells, 100);
  const DatasetBundle data = bench_dataset(c);
  const auto seeds = c.effective_seeds();
  const double frac = c.train_fractions.at(0);

  const RunOutcome o = run_once(data, frac, seeds.at(0), c, false);
  MetricRow row;
  row.experiment = "responsiveness";
  row.config_echo = "frac=" + fmt(frac) + ";seed=" + std::to_string(seeds.at(0));
  row.mae = o.fes_mae;
  row.mean_latency = o.mean_latency;
  row.extras = {{"p95_latency", o.p95_latency},
                {"train_seconds", o.train_seconds},
                {"train_over_predict", o.train_seconds / o.mean_latency},
                {"n_queries", static_cast<double>(o.n_eval)}};
  std::vector<MetricRow> rows{row};
  maybe_write(
      config,
      csv_notes(config, "responsiveness",
                {"note: timing columns are wall clock and vary between runs"}),
      rows);
  return rows;
}

std::vector<MetricRow> run_scalability(const ExperimentConfig& config,
                                       const std::vector<Index>& factors) {
  const DatasetBundle base = bench_dataset(config);
  const auto seeds = config.effective_seeds();
  const double frac = config.train_fractions.at(0);

  auto factor_split = [](Index f) -> std::pair<Index, Index> {
    switch (f) {
      case 1: return {1, 1};
      case 2: return {2, 1};
      case 3: return {3, 1};
      case 4: return {2, 2};
      case 6: return {3, 2};
      case 9: return {3, 3};
      default: throw ConfigError("unsupported augmentation factor " + std::to_string(f));
    }
  };

  std::vector<Index> all = factors;
  if (std::find(all.begin(), all.end(), Index{1}) == all.end())
    all.insert(all.begin(), 1);
  std::sort(all.begin(), all.end());

  std::vector<MetricRow> rows;
  double base_latency = 0.0;
  for (Index f : all) {
    const auto [uf, sf] = factor_split(f);
    const DatasetBundle bundle =
        f == 1 ? base
               : augment(base, uf, sf, mix_seed(config.seed, 500 + static_cast<std::uint64_t>(f)));
    const RunOutcome o = run_once(bundle, frac, seeds.at(0), config, false);
    if (f == 1) base_latency = o.mean_latency;
    MetricRow row;
    row.experiment = "scalability";
    row.config_echo = "factor=" + std::to_string(f) + ";seed=" + std::to_string(seeds.at(0));
    row.mae = o.fes_mae;
    row.mean_latency = o.mean_latency;
    row.extras = {{"size_ratio", static_cast<double>(f)},
                  {"time_ratio", o.mean_latency / base_latency},
                  {"users", static_cast<double>(bundle.matrix.n_users())},
                  {"services", static_cast<double>(bundle.matrix.n_services())},
                  {"train_seconds", o.train_seconds}};
    rows.push_back(std::move(row));
  }
  maybe_write(
      config,
      csv_notes(config, "scalability",
                {"note: timing columns are wall clock and vary between runs"}),
      rows);
  return rows;
}

std::vector<MetricRow> run_cold_start(const ExperimentConfig& config,
                                      double mask_fraction) {
  if (mask_fraction <= 0.0 || mask_fraction >= 1.0)
    throw ConfigError("cold-start mask fraction must lie in (0, 1)");
  const DatasetBundle data = bench_dataset(config);
  const auto seeds = config.effective_seeds();
  const std::uint64_t sd = seeds.at(0);
  const double frac = config.train_fractions.at(0);

  SplitSpec sp;
  sp.train_fraction = frac;
  sp.seed = mix_seed(sd, 101);
  const SplitResult parts = split(data, sp);

  const auto [masked_train, masked_ids] =
      mask_cold_start(parts.train, true, mask_fraction, mix_seed(sd, 300));

  DatasetBundle masked_bundle = data;
  masked_bundle.matrix = masked_train;
  DatasetBundle plain_bundle = data;
  plain_bundle.matrix = parts.train;

  const Engine masked_engine(masked_bundle, engine_config(config, sd));
  const Engine plain_engine(plain_bundle, engine_config(config, sd));

  IndexedCells on_masked_users;
  for (const Cell& cell : parts.test)
    if (std::binary_search(masked_ids.begin(), masked_ids.end(), cell.user))
      on_masked_users.push_back(cell);
  if (on_masked_users.empty())
    throw DataError("no test cells fall on the masked users; fixture too small");
  const IndexedCells eval =
      pick_eval_cells(on_masked_users, config.eval_cells, mix_seed(sd, 301));

  auto score = [&](const Engine& engine) {
    std::vector<double> pred, truth;
    for (const Cell& cell : eval) {
      pred.push_back(engine.predict({cell.user, cell.service}).value);
      truth.push_back(cell.value);
    }
    return mae(pred, truth);
  };
  const double masked_mae = score(masked_engine);
  const double plain_mae = score(plain_engine);

  std::vector<MetricRow> rows;
  for (int masked = 1; masked >= 0; --masked) {
    MetricRow row;
    row.experiment = "cold_start";
    row.config_echo = "frac=" + fmt(frac) + ";seed=" + std::to_string(sd) +
                      ";mask_fraction=" + fmt(mask_fraction) +
                      ";masked=" + std::to_string(masked);
    row.mae = masked ? masked_mae : plain_mae;
    row.extras = {{"masked", static_cast<double>(masked)},
                  {"n_eval", static_cast<double>(eval.size())},
                  {"masked_users", static_cast<double>(masked_ids.size())}};
    rows.push_back(std::move(row));
  }
  maybe_write(config,
              csv_notes(config, "cold_start",
                        {"note: both rows score the identical masked-user test cells"}),
              rows);
  return rows;
}

std::vector<MetricRow> run_sweep(const ExperimentConfig& config, SweepParam parameter,
                                 const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const DatasetBundle data = bench_dataset(config);
  const auto seeds = config.effective_seeds();
  const double frac = config.train_fractions.at(0);

  std::vector<MetricRow> rows;
  for (double v : values) {
    ExperimentConfig c = config;
    switch (parameter) {
      case SweepParam::Tau: c.tau = v; break;
      case SweepParam::S2Samples: c.s2_samples = static_cast<Index>(std::llround(v)); break;
      case SweepParam::S2Epochs: c.s2_max_epochs = static_cast<Index>(std::llround(v)); break;
      case SweepParam::S1Epochs: c.s1_max_epochs = static_cast<Index>(std::llround(v)); break;
    }
    double mae_sum = 0.0, lat_sum = 0.0;
    for (std::uint64_t sd : seeds) {
      const RunOutcome o = run_once(data, frac, sd, c, false);
      mae_sum += o.fes_mae;
      lat_sum += o.mean_latency;
    }
    const double n = static_cast<double>(seeds.size());
    MetricRow row;
    row.experiment = std::string("sweep_") + to_string(parameter);
    row.config_echo = std::string(to_string(parameter)) + "=" + fmt(v) +
                      ";frac=" + fmt(frac) + ";runs=" + std::to_string(seeds.size());
    row.mae = mae_sum / n;
    // Only the stage-1 epoch knob is paid per query; other sweeps keep the
    // CSV free of wall-clock columns so reruns are bit-identical.
    row.mean_latency = parameter == SweepParam::S1Epochs ? lat_sum / n : 0.0;
    row.extras = {{"value", v}, {"runs", n}};
    rows.push_back(std::move(row));
  }
  std::vector<std::string> extra_notes;
  if (parameter == SweepParam::S1Epochs)
    extra_notes.push_back("note: mean_latency is wall clock and varies between runs");
  maybe_write(config,
              csv_notes(config, std::string("sweep_") + to_string(parameter),
                        std::move(extra_notes)),
              rows);
  return rows;
}

std::vector<MetricRow> run_drift(const ExperimentConfig& config,
                                 const std::vector<double>& density_schedule) {
  if (density_schedule.empty()) throw ConfigError("drift needs a density schedule");
  for (std::size_t i = 0; i < density_schedule.size(); ++i) {
    if (density_schedule[i] <= 0.0 || density_schedule[i] > 1.0)
      throw ConfigError("drift densities must lie in (0, 1]");
    if (i > 0 && density_schedule[i] < density_schedule[i - 1])
      throw ConfigError("density schedule must be non-decreasing");
  }
  const DatasetBundle data = bench_dataset(config);
  const auto seeds = config.effective_seeds();
  const std::uint64_t sd = seeds.at(0);

  IndexedCells pool;
  for (Index u = 0; u < data.matrix.n_users(); ++u)
    for (Index s = 0; s < data.matrix.n_services(); ++s)
      if (data.matrix.valid(u, s)) pool.push_back({u, s, data.matrix.values(u, s)});

  // Held-out cells scored at every step; never revealed into the log.
  Rng eval_rng(mix_seed(sd, 400));
  const auto eval_idx = sample_indices(
      pool.size(),
      static_cast<std::size_t>(std::min<Index>(config.eval_cells,
                                               static_cast<Index>(pool.size()) / 2)),
      eval_rng);
  IndexedCells eval;
  std::vector<char> is_eval(pool.size(), 0);
  for (std::size_t i : eval_idx) {
    eval.push_back(pool[i]);
    is_eval[i] = 1;
  }
  IndexedCells reveal;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!is_eval[i]) reveal.push_back(pool[i]);
  Rng order_rng(mix_seed(sd, 401));
  shuffle(reveal, order_rng);

  auto count_at = [&](double density) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(density * static_cast<double>(reveal.size())));
  };

  DatasetBundle train = data;
  train.matrix = QosMatrix(data.matrix.n_users(), data.matrix.n_services());
  std::size_t revealed = count_at(density_schedule.front());
  for (std::size_t i = 0; i < revealed; ++i)
    train.matrix.values(reveal[i].user, reveal[i].service) = reveal[i].value;

  Engine engine(train, engine_config(config, sd));

  auto score = [&] {
    std::vector<double> errors;
    std::vector<double> pred, truth;
    for (const Cell& cell : eval) {
      const double p = engine.predict({cell.user, cell.service}).value;
      pred.push_back(p);
      truth.push_back(cell.value);
      errors.push_back(std::abs(p - cell.value));
    }
    return std::make_pair(mae(pred, truth), errors);
  };

  std::vector<MetricRow> rows;
  auto emit = [&](const char* name, std::size_t step, double step_density) {
    const auto [step_mae, errors] = score();
    const DriftReport report = engine.drift_check(errors);
    MetricRow row;
    row.experiment = name;
    row.config_echo = "step=" + std::to_string(step) +
                      ";density=" + fmt(step_density) + ";seed=" + std::to_string(sd);
    row.mae = step_mae;
    row.extras = {{"step", static_cast<double>(step)},
                  {"log_density", engine.density_now()},
                  {"retrain_recommended", report.retrain_recommended ? 1.0 : 0.0},
                  {"stale_stage2", engine.stage2_is_stale() ? 1.0 : 0.0}};
    rows.push_back(std::move(row));
  };

  emit("drift", 0, density_schedule.front());
  for (std::size_t k = 1; k < density_schedule.size(); ++k) {
    const std::size_t target = count_at(density_schedule[k]);
    for (std::size_t i = revealed; i < target; ++i)
      engine.observe(reveal[i].user, reveal[i].service, reveal[i].value);
    revealed = std::max(revealed, target);
    engine.refresh_fills();
    emit("drift", k, density_schedule[k]);
  }
  engine.retrain();
  emit("drift_retrained", density_schedule.size() - 1, density_schedule.back());

  maybe_write(
      config,
      csv_notes(config, "drift",
                {"note: fills are rebuilt from the grown log at each step while the "
                 "fusion net stays frozen at its step-0 weights; the final row "
                 "retrains everything on the grown log"}),
      rows);
  return rows;
}

}  // namespace fes
