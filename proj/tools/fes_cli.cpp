// Command-line front end: dataset inspection, the individual pipeline stages,
// end-to-end training/prediction against an artifact directory, and the
// benchmark experiment families.

#include "fes/bench.hpp"
#include "fes/dataset.hpp"
#include "fes/engine.hpp"
#include "fes/hash.hpp"
#include "fes/rng.hpp"
#include "fes/synth.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonOpts {
  std::string dataset;
  std::string qos = "rt";
  std::vector<double> train_fracs{0.1};
  double tau = 0.5;
  fes::Index nmin = 2;
  std::uint64_t seed = 1;
  fes::Index runs = 5;
  bool wocc = false;
  std::string out;
  bool full_scale = false;
  fes::Index synth_users = 60;
  fes::Index synth_services = 240;
  fes::Index synth_sites = 4;
  double synth_density = 1.0;
  double synth_spread = 0.2;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--dataset", o.dataset,
                  "Dataset directory (omit for the built-in synthetic workload)");
  cmd->add_option("--qos", o.qos, "QoS attribute: rt or tp")
      ->check(CLI::IsMember({"rt", "tp"}));
  cmd->add_option("--train-frac", o.train_fracs,
                  "Training fraction(s) of the valid entries");
  cmd->add_option("--tau", o.tau, "Threshold knob in [0, 1)");
  cmd->add_option("--nmin", o.nmin, "Minimum cluster size floor");
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--runs", o.runs, "Repetitions (seeds derive from --seed)");
  cmd->add_flag("--wocc", o.wocc, "Ignore location contexts (similarity-only mode)");
  cmd->add_option("--out", o.out, "Output path (CSV file or artifact directory)");
  cmd->add_flag("--full-scale", o.full_scale,
                "Use the full matrix instead of the 150x1000 desk slice");
  cmd->add_option("--synth-users", o.synth_users, "Synthetic workload: users");
  cmd->add_option("--synth-services", o.synth_services, "Synthetic workload: services");
  cmd->add_option("--synth-sites", o.synth_sites, "Synthetic workload: sites");
  cmd->add_option("--synth-density", o.synth_density, "Synthetic workload: density");
  cmd->add_option("--synth-spread", o.synth_spread,
                  "Synthetic workload: per-entity factor spread");
}

fes::QosKind qos_kind(const CommonOpts& o) {
  return o.qos == "tp" ? fes::QosKind::TP : fes::QosKind::RT;
}

fes::ExperimentConfig experiment_config(const CommonOpts& o) {
  fes::ExperimentConfig c;
  if (!o.dataset.empty()) c.dataset_dir = o.dataset;
  c.qos_kind = qos_kind(o);
  c.synth.n_users = o.synth_users;
  c.synth.n_services = o.synth_services;
  c.synth.n_sites = o.synth_sites;
  c.synth.density = o.synth_density;
  c.synth.factor_spread = o.synth_spread;
  c.synth.seed = fes::mix_seed(o.seed, 0xf1);
  c.train_fractions = o.train_fracs;
  c.tau = o.tau;
  c.n_min = o.nmin;
  c.runs = o.runs;
  c.seed = o.seed;
  c.wocc = o.wocc;
  c.full_scale = o.full_scale;
  if (!o.out.empty()) c.out_path = o.out;
  return c;
}

fes::DatasetBundle load_bundle(const CommonOpts& o) {
  if (!o.dataset.empty()) return fes::load_wsdream(o.dataset, qos_kind(o));
  fes::SynthSpec spec;
  spec.n_users = o.synth_users;
  spec.n_services = o.synth_services;
  spec.n_sites = o.synth_sites;
  spec.density = o.synth_density;
  spec.factor_spread = o.synth_spread;
  spec.seed = fes::mix_seed(o.seed, 0xf1);
  return fes::make_synthetic(spec);
}

fes::EngineConfig engine_config(const CommonOpts& o) {
  fes::EngineConfig e;
  e.tau = o.tau;
  e.n_min = o.nmin;
  e.use_contexts = !o.wocc;
  e.spec1 = fes::default_s1_spec(0);
  e.spec2 = fes::default_s2_spec(0);
  e.s2_samples = 400;
  e.seed = o.seed;
  return e;
}

void print_rows(const std::vector<fes::MetricRow>& rows) {
  for (const auto& row : rows) {
    std::printf("%-18s %-40s mae=%.6g", row.experiment.c_str(),
                row.config_echo.c_str(), row.mae);
    if (row.mean_latency > 0.0) std::printf(" latency=%.4gs", row.mean_latency);
    for (const auto& [key, value] : row.extras)
      std::printf(" %s=%.6g", key.c_str(), value);
    std::printf("\n");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"FES QoS prediction engine"};
  app.require_subcommand(1);

  CommonOpts o;

  auto* cmd_load = app.add_subcommand("load", "Load a dataset and print a summary");
  add_common(cmd_load, o);

  auto* cmd_cluster =
      app.add_subcommand("cluster", "Build the two cluster forests from a train split");
  add_common(cmd_cluster, o);

  auto* cmd_fill = app.add_subcommand(
      "fill", "Cluster, then fill every cluster sub-matrix by CF and MF");
  add_common(cmd_fill, o);

  auto* cmd_train = app.add_subcommand(
      "train", "Full offline pipeline; --out persists the artifact directory");
  add_common(cmd_train, o);

  auto* cmd_predict =
      app.add_subcommand("predict", "Predict one pair against saved artifacts");
  std::string artifacts_dir;
  fes::Index q_user = 0, q_service = 0;
  cmd_predict->add_option("--artifacts", artifacts_dir, "Artifact directory from train")
      ->required();
  cmd_predict->add_option("--user", q_user, "Target user id")->required();
  cmd_predict->add_option("--service", q_service, "Target service id")->required();

  auto* cmd_bench = app.add_subcommand("bench", "Run an experiment family");
  std::string experiment;
  cmd_bench
      ->add_option("experiment", experiment,
                   "accuracy|responsiveness|scalability|cold-start|sweep|drift")
      ->required();
  add_common(cmd_bench, o);
  std::vector<fes::Index> factors{1, 2, 4, 9};
  double mask_fraction = 0.25;
  std::string sweep_param = "tau";
  std::vector<double> sweep_values;
  std::vector<double> schedule{0.05, 0.1, 0.2, 0.4};
  fes::Index eval_cells = 150;
  fes::Index s2_samples = 400;
  cmd_bench->add_option("--factors", factors, "scalability: augmentation factors");
  cmd_bench->add_option("--mask-fraction", mask_fraction,
                        "cold-start: fraction of users masked");
  cmd_bench->add_option("--param", sweep_param,
                        "sweep: tau|s2_samples|s2_epochs|s1_epochs")
      ->check(CLI::IsMember({"tau", "s2_samples", "s2_epochs", "s1_epochs"}));
  cmd_bench->add_option("--values", sweep_values, "sweep: values to try");
  cmd_bench->add_option("--schedule", schedule, "drift: density schedule");
  cmd_bench->add_option("--eval-cells", eval_cells, "test cells scored per run");
  cmd_bench->add_option("--s2-samples", s2_samples, "fusion training set size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Flag misuse is a configuration error; --help and friends stay 0.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (cmd_load->parsed()) {
    const fes::DatasetBundle b = load_bundle(o);
    b.check();
    std::printf("users:     %lld\n", static_cast<long long>(b.matrix.n_users()));
    std::printf("services:  %lld\n", static_cast<long long>(b.matrix.n_services()));
    std::printf("valid:     %lld\n", static_cast<long long>(b.matrix.valid_count()));
    std::printf("density:   %.4f\n", b.matrix.density());
    std::printf("contexts:  %s\n", b.has_contexts() ? "yes" : "no");
    if (!o.out.empty()) {
      fes::export_triples_csv(o.out, b.matrix);
      std::printf("wrote %s\n", o.out.c_str());
    }
    return 0;
  }

  if (cmd_cluster->parsed()) {
    fes::DatasetBundle b = load_bundle(o);
    fes::SplitSpec sp;
    sp.train_fraction = o.train_fracs.at(0);
    sp.seed = fes::mix_seed(o.seed, 101);
    const fes::SplitResult parts = fes::split(b, sp);
    const bool ctx = !o.wocc && b.has_contexts();
    const fes::ForestPair forests = fes::build_forest(
        parts.train, ctx ? &b.user_contexts : nullptr,
        ctx ? &b.service_contexts : nullptr, o.tau, o.nmin);
    std::printf("uicl: %zu first-level clusters, %lld multi-level\n",
                forests.uicl.first_level.size(),
                static_cast<long long>(forests.uicl.multilevel_count()));
    std::printf("sicl: %zu first-level clusters, %lld multi-level\n",
                forests.sicl.first_level.size(),
                static_cast<long long>(forests.sicl.multilevel_count()));
    std::printf("fingerprint: %s\n", fes::to_hex(forests.fingerprint()).c_str());
    if (!o.out.empty()) {
      std::filesystem::create_directories(o.out);
      fes::save_forest(std::filesystem::path(o.out) / "uicl.json", forests.uicl);
      fes::save_forest(std::filesystem::path(o.out) / "sicl.json", forests.sicl);
      std::printf("wrote %s/{uicl,sicl}.json\n", o.out.c_str());
    }
    return 0;
  }

  if (cmd_fill->parsed()) {
    fes::DatasetBundle b = load_bundle(o);
    fes::SplitSpec sp;
    sp.train_fraction = o.train_fracs.at(0);
    sp.seed = fes::mix_seed(o.seed, 101);
    const fes::SplitResult parts = fes::split(b, sp);
    const bool ctx = !o.wocc && b.has_contexts();
    const fes::ForestPair forests = fes::build_forest(
        parts.train, ctx ? &b.user_contexts : nullptr,
        ctx ? &b.service_contexts : nullptr, o.tau, o.nmin);
    fes::MfParams mf;
    mf.seed = fes::mix_seed(o.seed, 1);
    const fes::PreprocessedStore store =
        o.out.empty() ? fes::preprocess_all(parts.train, forests, mf)
                      : fes::preprocess_resumable(o.out, parts.train, forests, mf);
    std::printf("stored matrices: %lld multi-level clusters x 2 fills\n",
                static_cast<long long>(forests.uicl.multilevel_count() +
                                       forests.sicl.multilevel_count()));
    std::printf("stored cells:    %lld\n", static_cast<long long>(store.total_cells()));
    std::printf("fingerprint:     %s\n", fes::to_hex(store.fingerprint()).c_str());
    return 0;
  }

  if (cmd_train->parsed()) {
    fes::DatasetBundle b = load_bundle(o);
    const auto t0 = std::chrono::steady_clock::now();
    const fes::Engine engine(b, engine_config(o));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto art = engine.snapshot();
    std::printf("trained in %.2fs on density %.4f, |TrD_S2|=%lld\n", secs,
                art->density_at_train, static_cast<long long>(art->model.trained_on));
    std::printf("artifacts: %s\n", fes::to_hex(engine.artifact_fingerprint()).c_str());
    if (!o.out.empty()) {
      engine.save(o.out);
      std::printf("wrote %s\n", o.out.c_str());
    }
    return 0;
  }

  if (cmd_predict->parsed()) {
    const fes::Engine engine = fes::Engine::load(artifacts_dir);
    const fes::PredictionResult r = engine.predict({q_user, q_service});
    std::printf("prediction: %.6g\n", r.value);
    std::printf("stage1:     %.6g %.6g %.6g %.6g\n", r.stage1[0], r.stage1[1],
                r.stage1[2], r.stage1[3]);
    std::printf("latency:    %.4gs\n", r.latency_s);
    std::printf("clusters:   uicl(%d,%d) sicl(%d,%d)\n", r.uicl_cluster.first,
                r.uicl_cluster.second, r.sicl_cluster.first, r.sicl_cluster.second);
    return 0;
  }

  // bench
  fes::ExperimentConfig c = experiment_config(o);
  c.eval_cells = eval_cells;
  c.s2_samples = s2_samples;
  std::vector<fes::MetricRow> rows;
  if (experiment == "accuracy") {
    rows = fes::run_accuracy(c);
  } else if (experiment == "responsiveness") {
    rows = fes::run_responsiveness(c);
  } else if (experiment == "scalability") {
    rows = fes::run_scalability(c, factors);
  } else if (experiment == "cold-start") {
    rows = fes::run_cold_start(c, mask_fraction);
  } else if (experiment == "sweep") {
    fes::SweepParam param = fes::SweepParam::Tau;
    if (sweep_param == "s2_samples") param = fes::SweepParam::S2Samples;
    if (sweep_param == "s2_epochs") param = fes::SweepParam::S2Epochs;
    if (sweep_param == "s1_epochs") param = fes::SweepParam::S1Epochs;
    if (sweep_values.empty()) {
      if (param == fes::SweepParam::Tau) sweep_values = {0.2, 0.5, 0.8};
      else if (param == fes::SweepParam::S2Samples) sweep_values = {100, 200, 400};
      else if (param == fes::SweepParam::S2Epochs) sweep_values = {500, 2000, 5000};
      else sweep_values = {10, 25, 50};
    }
    rows = fes::run_sweep(c, param, sweep_values);
  } else if (experiment == "drift") {
    rows = fes::run_drift(c, schedule);
  } else {
    throw fes::ConfigError("unknown experiment: " + experiment);
  }
  print_rows(rows);
  if (!o.out.empty()) std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const fes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fes::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
