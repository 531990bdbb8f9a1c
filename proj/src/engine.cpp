#include "fes/engine.hpp"

#include "fes/dataset.hpp"
#include "fes/hash.hpp"
#include "fes/rng.hpp"
#include "json_detail.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fes {

using nlohmann::json;

DriftReport drift_check(const std::vector<double>& recent_errors, double threshold,
                        double density_at_train, double density_now) {
  if (recent_errors.empty())
    throw ConfigError("drift check needs at least one recent error");
  double sum = 0.0;
  for (double e : recent_errors) sum += std::abs(e);
  DriftReport report;
  report.recent_mae = sum / static_cast<double>(recent_errors.size());
  report.threshold = threshold;
  report.density_at_train = density_at_train;
  report.density_now = density_now;
  report.retrain_recommended = report.recent_mae > threshold;
  return report;
}

std::uint64_t Artifacts::fingerprint() const {
  const std::uint64_t parts[3] = {forests.fingerprint(), store.fingerprint(),
                                  model.forest_hash};
  std::uint64_t h = fnv1a(parts, sizeof(parts));
  // Fold in the fusion net weights so a swapped model cannot go unnoticed.
  for (const auto& w : model.s2.weights) h = fnv1a(&h, sizeof(h), matrix_hash(w));
  return h;
}

std::shared_ptr<const Artifacts> Engine::build_artifacts(const DatasetBundle& log,
                                                         const EngineConfig& config) {
  log.check();
  const bool with_ctx = config.use_contexts && log.has_contexts();

  auto artifacts = std::make_shared<Artifacts>();
  artifacts->forests = build_forest(log.matrix,
                                    with_ctx ? &log.user_contexts : nullptr,
                                    with_ctx ? &log.service_contexts : nullptr,
                                    config.tau, config.n_min);

  MfParams mf = config.mf;
  mf.seed = mix_seed(config.seed, 1);
  artifacts->store = preprocess_all(log.matrix, artifacts->forests, mf);

  MlpSpec spec1 = config.spec1;
  spec1.seed = mix_seed(config.seed, 2);
  const S2TrainingSet set =
      build_s2_training_set(log.matrix, artifacts->store, artifacts->forests,
                            config.s2_samples, spec1, mix_seed(config.seed, 3),
                            config.feature_cap);
  if (set.targets.size() == 0)
    throw DataError("training log has no valid entries to fit the fusion stage on");

  MlpSpec spec2 = config.spec2;
  spec2.seed = mix_seed(config.seed, 4);
  artifacts->model =
      train_s2(set.features, set.targets, spec2, artifacts->store.forest_hash);
  artifacts->model.spec1 = spec1;
  artifacts->model.feature_cap = config.feature_cap;
  artifacts->density_at_train = log.matrix.density();
  return artifacts;
}

Engine::Engine(DatasetBundle log, EngineConfig config)
    : config_(std::move(config)), log_(std::move(log)) {
  config_.spec1.validate();
  config_.spec2.validate();
  artifacts_ = build_artifacts(log_, config_);
}

Engine::Engine(DatasetBundle log, EngineConfig config, bool)
    : config_(std::move(config)), log_(std::move(log)) {}

Engine::Engine(Engine&& other) noexcept
    : config_(std::move(other.config_)),
      log_(std::move(other.log_)),
      stale_stage2_(other.stale_stage2_),
      artifacts_(std::move(other.artifacts_)) {}

PredictionResult Engine::predict(const Query& query) const {
  std::shared_ptr<const Artifacts> art = snapshot();
  const QosMatrix& m = log_.matrix;  // dimensions only; values are not read here
  if (query.user < 0 || query.user >= m.n_users() || query.service < 0 ||
      query.service >= m.n_services())
    throw DataError(
        "cold-start: unknown user or service id with no context to place it by");
  if (!stale_stage2_ && art->model.forest_hash != art->store.forest_hash)
    throw DataError("stale model: fusion net was trained against a different store");

  const auto t0 = std::chrono::steady_clock::now();
  const FilledQuad quad =
      art->store.lookup(art->forests, query.user, query.service);
  PredictionResult result;
  result.value =
      fused_predict(art->model, quad, query.user, query.service, &result.stage1);
  const auto t1 = std::chrono::steady_clock::now();
  result.latency_s = std::chrono::duration<double>(t1 - t0).count();
  result.uicl_cluster = art->forests.uicl.pair_index(query.user, query.service);
  result.sicl_cluster = art->forests.sicl.pair_index(query.user, query.service);
  return result;
}

void Engine::observe(Index user, Index service, double value) {
  if (value <= 0.0) throw ConfigError("observed QoS values must be positive");
  std::lock_guard<std::mutex> lock(log_mutex_);
  if (user < 0 || user >= log_.matrix.n_users() || service < 0 ||
      service >= log_.matrix.n_services())
    throw DataError("observation ids out of range");
  log_.matrix.values(user, service) = value;  // last write wins
}

DriftReport Engine::drift_check(const std::vector<double>& recent_errors) const {
  return fes::drift_check(recent_errors, config_.drift_threshold, density_at_train(),
                          density_now());
}

void Engine::retrain() {
  DatasetBundle log_copy;
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_copy = log_;
  }
  auto fresh = build_artifacts(log_copy, config_);
  std::lock_guard<std::mutex> lock(artifacts_mutex_);
  artifacts_ = std::move(fresh);
  stale_stage2_ = false;
}

void Engine::refresh_fills() {
  DatasetBundle log_copy;
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_copy = log_;
  }
  log_copy.check();
  const bool with_ctx = config_.use_contexts && log_copy.has_contexts();

  auto fresh = std::make_shared<Artifacts>();
  fresh->forests = build_forest(log_copy.matrix,
                                with_ctx ? &log_copy.user_contexts : nullptr,
                                with_ctx ? &log_copy.service_contexts : nullptr,
                                config_.tau, config_.n_min);
  MfParams mf = config_.mf;
  mf.seed = mix_seed(config_.seed, 1);
  fresh->store = preprocess_all(log_copy.matrix, fresh->forests, mf);
  fresh->density_at_train = snapshot()->density_at_train;
  fresh->model = snapshot()->model;  // frozen fusion net, hash left stale

  std::lock_guard<std::mutex> lock(artifacts_mutex_);
  artifacts_ = std::move(fresh);
  stale_stage2_ = true;
}

double Engine::density_now() const {
  std::lock_guard<std::mutex> lock(log_mutex_);
  return log_.matrix.density();
}

double Engine::density_at_train() const { return snapshot()->density_at_train; }

std::uint64_t Engine::artifact_fingerprint() const { return snapshot()->fingerprint(); }

QosMatrix Engine::log_matrix() const {
  std::lock_guard<std::mutex> lock(log_mutex_);
  return log_.matrix;
}

std::shared_ptr<const Artifacts> Engine::snapshot() const {
  std::lock_guard<std::mutex> lock(artifacts_mutex_);
  return artifacts_;
}

namespace {

json config_to_json(const EngineConfig& c) {
  json j;
  j["tau"] = c.tau;
  j["n_min"] = c.n_min;
  j["use_contexts"] = c.use_contexts;
  j["mf"] = detail::mf_to_json(c.mf);
  j["spec1"] = detail::spec_to_json(c.spec1);
  j["spec2"] = detail::spec_to_json(c.spec2);
  j["s2_samples"] = c.s2_samples;
  j["feature_cap"] = c.feature_cap;
  j["drift_threshold"] = c.drift_threshold;
  j["seed"] = c.seed;
  return j;
}

EngineConfig config_from_json(const json& j) {
  EngineConfig c;
  c.tau = j.at("tau").get<double>();
  c.n_min = j.at("n_min").get<Index>();
  c.use_contexts = j.at("use_contexts").get<bool>();
  c.mf = detail::mf_from_json(j.at("mf"));
  c.spec1 = detail::spec_from_json(j.at("spec1"));
  c.spec2 = detail::spec_from_json(j.at("spec2"));
  c.s2_samples = j.at("s2_samples").get<Index>();
  c.feature_cap = j.at("feature_cap").get<Index>();
  c.drift_threshold = j.at("drift_threshold").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void Engine::save(const std::filesystem::path& dir) const {
  std::shared_ptr<const Artifacts> art = snapshot();
  DatasetBundle log_copy;
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_copy = log_;
  }

  std::filesystem::create_directories(dir / "forest");
  save_forest(dir / "forest" / "uicl.json", art->forests.uicl);
  save_forest(dir / "forest" / "sicl.json", art->forests.sicl);
  if (!log_copy.user_contexts.empty())
    write_context_file(dir / "forest" / "users.txt", log_copy.user_contexts);
  if (!log_copy.service_contexts.empty())
    write_context_file(dir / "forest" / "services.txt", log_copy.service_contexts);

  save_store(dir / "store", art->store);
  save_model(dir / "model.json", art->model);
  export_triples_csv(dir / "log.csv", log_copy.matrix);

  json manifest;
  manifest["version"] = 1;
  manifest["qos_kind"] = to_string(log_copy.qos_kind);
  manifest["n_users"] = log_copy.matrix.n_users();
  manifest["n_services"] = log_copy.matrix.n_services();
  manifest["density_at_train"] = art->density_at_train;
  manifest["stale_stage2"] = stale_stage2_;
  manifest["config"] = config_to_json(config_);
  manifest["forest_hash"] = to_hex(art->forests.fingerprint());
  manifest["artifact_hash"] = to_hex(art->fingerprint());
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write engine manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Engine Engine::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no engine manifest in " + dir.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const json manifest = json::parse(ss.str());
  if (manifest.at("version").get<int>() != 1)
    throw DataError("unsupported artifact version");

  const Index n_users = manifest.at("n_users").get<Index>();
  const Index n_services = manifest.at("n_services").get<Index>();

  DatasetBundle log;
  log.qos_kind =
      manifest.at("qos_kind").get<std::string>() == "tp" ? QosKind::TP : QosKind::RT;
  log.matrix = import_triples_csv(dir / "log.csv", n_users, n_services);
  if (std::filesystem::exists(dir / "forest" / "users.txt"))
    log.user_contexts = read_context_file(dir / "forest" / "users.txt");
  if (std::filesystem::exists(dir / "forest" / "services.txt"))
    log.service_contexts = read_context_file(dir / "forest" / "services.txt");
  log.check();

  Engine engine(std::move(log), config_from_json(manifest.at("config")), true);
  engine.stale_stage2_ = manifest.at("stale_stage2").get<bool>();

  auto art = std::make_shared<Artifacts>();
  art->forests.uicl = load_forest(dir / "forest" / "uicl.json", n_users, n_services);
  art->forests.sicl = load_forest(dir / "forest" / "sicl.json", n_services, n_users);
  if (to_hex(art->forests.fingerprint()) !=
      manifest.at("forest_hash").get<std::string>())
    throw DataError("persisted forests do not match the manifest hash");
  art->store = load_store(dir / "store", art->forests);
  art->model = engine.stale_stage2_
                   ? load_model(dir / "model.json")
                   : load_model(dir / "model.json", art->store.forest_hash);
  art->density_at_train = manifest.at("density_at_train").get<double>();
  engine.artifacts_ = std::move(art);
  return engine;
}

}  // namespace fes
