#include "fes/neuralreg.hpp"

#include "fes/hash.hpp"
#include "fes/metrics.hpp"
#include "fes/parallel.hpp"
#include "fes/rng.hpp"
#include "json_detail.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace fes {

using nlohmann::json;

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3)
    throw ConfigError("mlp needs at least one hidden layer");
  if (layer_sizes.back() != 1) throw ConfigError("mlp output layer must have size 1");
  for (std::size_t l = 1; l < layer_sizes.size(); ++l)
    if (layer_sizes[l] < 1) throw ConfigError("mlp layer sizes must be positive");
  if (lr <= 0.0) throw ConfigError("mlp learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("mlp momentum must lie in [0, 1)");
  if (batch < 0) throw ConfigError("mlp batch size cannot be negative");
  if (max_epochs < 1) throw ConfigError("mlp needs at least one epoch");
  if (min_gradient < 0.0) throw ConfigError("mlp gradient floor cannot be negative");
}

MinMaxScaler MinMaxScaler::fit(const Vector& data) {
  MinMaxScaler s;
  s.lo = data.minCoeff();
  s.hi = data.maxCoeff();
  if (s.lo == s.hi) {
    s.constant = true;
    s.hi = s.lo + 1.0;  // keep the map well-defined; scale() shortcuts anyway
  }
  return s;
}

namespace {

inline Matrix sigmoid(const Matrix& z) {
  return ((-z.array()).exp() + 1.0).inverse().matrix();
}

}  // namespace

Vector mlp_forward(const std::vector<Matrix>& weights,
                   const std::vector<Vector>& biases, const Matrix& x) {
  Matrix a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Matrix z = a * weights[l].transpose();
    z.rowwise() += biases[l].transpose();
    a = l + 1 < weights.size() ? sigmoid(z) : std::move(z);
  }
  return a.col(0);
}

MlpGradient mlp_loss_gradient(const std::vector<Matrix>& weights,
                              const std::vector<Vector>& biases, const Matrix& x,
                              const Vector& y) {
  const std::size_t layers = weights.size();
  const double n = static_cast<double>(x.rows());

  std::vector<Matrix> acts(layers + 1);
  acts[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = acts[l] * weights[l].transpose();
    z.rowwise() += biases[l].transpose();
    acts[l + 1] = l + 1 < layers ? sigmoid(z) : std::move(z);
  }

  MlpGradient g;
  g.dw.resize(layers);
  g.db.resize(layers);
  const Vector err = acts[layers].col(0) - y;
  g.loss = err.squaredNorm() / n;

  // dL/dz on the linear output; hidden deltas pick up the sigmoid slope.
  Matrix delta = (2.0 / n) * err;
  for (std::size_t l = layers; l-- > 0;) {
    g.dw[l] = delta.transpose() * acts[l];
    g.db[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * weights[l];
      delta = back.array() * acts[l].array() * (1.0 - acts[l].array());
    }
  }
  return g;
}

double MlpGradient::norm() const {
  double sq = 0.0;
  for (const auto& m : dw) sq += m.squaredNorm();
  for (const auto& v : db) sq += v.squaredNorm();
  return std::sqrt(sq);
}

namespace {

bool all_finite(const std::vector<Matrix>& ws, const std::vector<Vector>& bs) {
  for (const auto& w : ws)
    if (!w.allFinite()) return false;
  for (const auto& b : bs)
    if (!b.allFinite()) return false;
  return true;
}

}  // namespace

TrainedMlp train_mlp(const MlpSpec& spec, const Matrix& samples, const Vector& targets) {
  spec.validate();
  const Index n = samples.rows(), d = samples.cols();
  if (n < 1) throw ConfigError("mlp training needs at least one sample");
  if (targets.size() != n)
    throw ConfigError("mlp sample and target counts disagree");
  if (d != spec.layer_sizes.front())
    throw ConfigError("mlp feature count does not match the spec input size");

  TrainedMlp net;
  net.spec = spec;
  net.input_scalers.reserve(static_cast<std::size_t>(d));
  Matrix x(n, d);
  for (Index j = 0; j < d; ++j) {
    MinMaxScaler s = MinMaxScaler::fit(samples.col(j));
    for (Index i = 0; i < n; ++i) x(i, j) = s.scale(samples(i, j));
    net.input_scalers.push_back(s);
  }
  net.target_scaler = MinMaxScaler::fit(targets);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = net.target_scaler.scale(targets(i));

  const std::size_t layers = spec.layer_sizes.size() - 1;
  Rng rng(spec.seed);
  std::vector<Matrix> vw(layers);
  std::vector<Vector> vb(layers);
  net.weights.resize(layers);
  net.biases.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const Index fan_in = spec.layer_sizes[l];
    const Index fan_out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    net.weights[l].resize(fan_out, fan_in);
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c)
        net.weights[l](r, c) = uniform_real(rng, -bound, bound);
    net.biases[l] = Vector::Zero(fan_out);
    vw[l] = Matrix::Zero(fan_out, fan_in);
    vb[l] = Vector::Zero(fan_out);
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (Index epoch = 0; epoch < spec.max_epochs; ++epoch) {
    // Full-batch gradient doubles as the stopping signal for both modes.
    MlpGradient g = mlp_loss_gradient(net.weights, net.biases, x, y);
    if (!std::isfinite(g.loss))
      throw DataError("mlp training diverged at epoch " + std::to_string(epoch));
    if (g.norm() < spec.min_gradient) break;

    if (spec.batch == 0 || spec.batch >= n) {
      for (std::size_t l = 0; l < layers; ++l) {
        vw[l] = spec.momentum * vw[l] - spec.lr * g.dw[l];
        vb[l] = spec.momentum * vb[l] - spec.lr * g.db[l];
        net.weights[l] += vw[l];
        net.biases[l] += vb[l];
      }
    } else {
      shuffle(order, rng);
      for (Index start = 0; start < n; start += spec.batch) {
        const Index len = std::min(spec.batch, n - start);
        Matrix bx(len, d);
        Vector by(len);
        for (Index r = 0; r < len; ++r) {
          bx.row(r) = x.row(order[static_cast<std::size_t>(start + r)]);
          by(r) = y(order[static_cast<std::size_t>(start + r)]);
        }
        MlpGradient bg = mlp_loss_gradient(net.weights, net.biases, bx, by);
        for (std::size_t l = 0; l < layers; ++l) {
          vw[l] = spec.momentum * vw[l] - spec.lr * bg.dw[l];
          vb[l] = spec.momentum * vb[l] - spec.lr * bg.db[l];
          net.weights[l] += vw[l];
          net.biases[l] += vb[l];
        }
      }
    }
    net.epochs_run = epoch + 1;
    if (!all_finite(net.weights, net.biases))
      throw DataError("mlp training diverged at epoch " + std::to_string(epoch));
  }
  return net;
}

double TrainedMlp::predict(const Vector& raw_features) const {
  if (raw_features.size() != static_cast<Index>(input_scalers.size()))
    throw ConfigError("prediction feature count does not match the trained net");
  Matrix x(1, raw_features.size());
  for (Index j = 0; j < raw_features.size(); ++j)
    x(0, j) = input_scalers[static_cast<std::size_t>(j)].scale(raw_features(j));
  const double scaled = mlp_forward(weights, biases, x)(0);
  return target_scaler.descale(scaled);
}

namespace {

// Columns used as stage-1 features: all except the target, or under a cap the
// cap-many most similar to the target column (ties toward lower ids).
std::vector<Index> stage1_feature_cols(const Matrix& values, Index target_col,
                                       Index feature_cap) {
  std::vector<Index> cols;
  cols.reserve(static_cast<std::size_t>(values.cols() - 1));
  for (Index j = 0; j < values.cols(); ++j)
    if (j != target_col) cols.push_back(j);
  if (feature_cap > 0 && static_cast<Index>(cols.size()) > feature_cap) {
    std::vector<std::pair<double, Index>> scored;
    scored.reserve(cols.size());
    for (Index j : cols)
      scored.emplace_back(cosine_sim(values.col(j), values.col(target_col)), j);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    scored.resize(static_cast<std::size_t>(feature_cap));
    cols.clear();
    for (const auto& [s, j] : scored) cols.push_back(j);
    std::sort(cols.begin(), cols.end());
  }
  return cols;
}

double stage1_one(const FilledMatrix& fm, Index user, Index service,
                  const MlpSpec& spec_template, std::uint64_t net_seed,
                  Index feature_cap) {
  if (fm.values.rows() < 2 || fm.values.cols() < 2)
    throw DataError("insufficient cluster for stage-1 (need at least 2x2)");
  const Index r = fm.row_pos(user);
  const Index c = fm.col_pos(service);

  const std::vector<Index> cols = stage1_feature_cols(fm.values, c, feature_cap);
  const Index d = static_cast<Index>(cols.size());
  const Index m = fm.values.rows() - 1;

  Matrix samples(m, d);
  Vector labels(m);
  Index row = 0;
  for (Index i = 0; i < fm.values.rows(); ++i) {
    if (i == r) continue;
    for (Index j = 0; j < d; ++j) samples(row, j) = fm.values(i, cols[static_cast<std::size_t>(j)]);
    labels(row) = fm.values(i, c);
    ++row;
  }

  MlpSpec spec = spec_template;
  spec.layer_sizes.front() = d;
  spec.seed = net_seed;
  const TrainedMlp net = train_mlp(spec, samples, labels);

  Vector query(d);
  for (Index j = 0; j < d; ++j) query(j) = fm.values(r, cols[static_cast<std::size_t>(j)]);
  return net.predict(query);
}

}  // namespace

std::array<double, 4> nregs1_predict(const FilledQuad& quad, Index user, Index service,
                                     const MlpSpec& spec, Index feature_cap) {
  const FilledMatrix* mats[4] = {quad.q_u_c, quad.q_u_m, quad.q_s_c, quad.q_s_m};
  for (const auto* m : mats)
    if (!m) throw DataError("stage-1: query quad is incomplete");
  std::array<double, 4> out{};
  parallel_for(4, [&](Index k) {
    out[static_cast<std::size_t>(k)] =
        stage1_one(*mats[k], user, service, spec,
                   mix_seed(spec.seed, static_cast<std::uint64_t>(k)), feature_cap);
  });
  return out;
}

std::vector<std::uint64_t> round_robin_draw(
    const std::vector<std::vector<std::uint64_t>>& buckets, Index n) {
  std::vector<std::uint64_t> drawn;
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::size_t> cursor(buckets.size(), 0);
  bool any_left = true;
  while (static_cast<Index>(drawn.size()) < n && any_left) {
    any_left = false;
    for (std::size_t b = 0; b < buckets.size() && static_cast<Index>(drawn.size()) < n;
         ++b) {
      auto& cur = cursor[b];
      while (cur < buckets[b].size() && seen.count(buckets[b][cur])) ++cur;
      if (cur >= buckets[b].size()) continue;
      any_left = true;
      seen.insert(buckets[b][cur]);
      drawn.push_back(buckets[b][cur]);
      ++cur;
    }
  }
  return drawn;
}

S2TrainingSet build_s2_training_set(const QosMatrix& train,
                                    const PreprocessedStore& store,
                                    const ForestPair& forests, Index n_samples,
                                    const MlpSpec& spec1, std::uint64_t seed,
                                    Index feature_cap) {
  if (n_samples < 1) throw ConfigError("stage-2 needs at least one training sample");
  const Index S = train.n_services();

  // One bucket per multi-level cluster of each forest, holding the valid
  // training cells of that cluster's sub-matrix in shuffled order.
  std::vector<std::vector<std::uint64_t>> buckets;
  std::uint64_t bucket_stream = 0;
  for (int mi = 0; mi < 2; ++mi) {
    const ClusterForest& f = mi == 0 ? forests.uicl : forests.sicl;
    for (std::size_t k = 0; k < f.first_level.size(); ++k)
      for (std::size_t c = 0; c < f.second_level[k].size(); ++c) {
        const auto [rows, cols] = f.multilevel_members(static_cast<int>(k),
                                                       static_cast<int>(c));
        std::vector<std::uint64_t> keys;
        for (Index u : rows)
          for (Index s : cols)
            if (train.valid(u, s))
              keys.push_back(static_cast<std::uint64_t>(u) *
                                 static_cast<std::uint64_t>(S) +
                             static_cast<std::uint64_t>(s));
        Rng rng(mix_seed(seed, bucket_stream++));
        shuffle(keys, rng);
        buckets.push_back(std::move(keys));
      }
  }

  const std::vector<std::uint64_t> keys = round_robin_draw(buckets, n_samples);

  S2TrainingSet set;
  set.exhausted = static_cast<Index>(keys.size()) < n_samples;
  const Index n = static_cast<Index>(keys.size());
  set.features.resize(n, 4);
  set.targets.resize(n);
  set.pairs.resize(static_cast<std::size_t>(n));

  parallel_for(n, [&](Index i) {
    const std::uint64_t key = keys[static_cast<std::size_t>(i)];
    const Index u = static_cast<Index>(key / static_cast<std::uint64_t>(S));
    const Index s = static_cast<Index>(key % static_cast<std::uint64_t>(S));
    const FilledQuad quad = store.lookup(forests, u, s);
    MlpSpec spec = spec1;
    spec.seed = mix_seed(seed, 0x53320000ULL + static_cast<std::uint64_t>(i));
    const std::array<double, 4> feats = nregs1_predict(quad, u, s, spec, feature_cap);
    for (Index j = 0; j < 4; ++j) set.features(i, j) = feats[static_cast<std::size_t>(j)];
    set.targets(i) = train.values(u, s);
    set.pairs[static_cast<std::size_t>(i)] = {u, s, train.values(u, s)};
  });
  return set;
}

FusedModel train_s2(const Matrix& features, const Vector& targets, const MlpSpec& spec2,
                    std::uint64_t forest_hash) {
  if (features.cols() != 4)
    throw ConfigError("stage-2 expects exactly the four stage-1 outputs");
  FusedModel model;
  model.s2 = train_mlp(spec2, features, targets);
  model.forest_hash = forest_hash;
  model.trained_on = features.rows();
  return model;
}

double fused_predict(const FusedModel& model, const FilledQuad& quad, Index user,
                     Index service, std::array<double, 4>* stage1_out) {
  const std::array<double, 4> s1 =
      nregs1_predict(quad, user, service, model.spec1, model.feature_cap);
  if (stage1_out) *stage1_out = s1;
  Vector v(4);
  for (Index j = 0; j < 4; ++j) v(j) = s1[static_cast<std::size_t>(j)];
  return model.s2.predict(v);
}

namespace {

using detail::spec_from_json;
using detail::spec_to_json;

json scaler_to_json(const MinMaxScaler& s) {
  return json{{"lo", s.lo}, {"hi", s.hi}, {"constant", s.constant}};
}

MinMaxScaler scaler_from_json(const json& j) {
  MinMaxScaler s;
  s.lo = j.at("lo").get<double>();
  s.hi = j.at("hi").get<double>();
  s.constant = j.at("constant").get<bool>();
  return s;
}

json net_to_json(const TrainedMlp& net) {
  json j;
  j["spec"] = spec_to_json(net.spec);
  j["epochs_run"] = net.epochs_run;
  json layers = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    json layer;
    layer["rows"] = net.weights[l].rows();
    layer["cols"] = net.weights[l].cols();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(net.weights[l].size()));
    for (Index r = 0; r < net.weights[l].rows(); ++r)
      for (Index c = 0; c < net.weights[l].cols(); ++c)
        w.push_back(net.weights[l](r, c));
    layer["w"] = std::move(w);
    layer["b"] = std::vector<double>(net.biases[l].data(),
                                     net.biases[l].data() + net.biases[l].size());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  json scalers = json::array();
  for (const auto& s : net.input_scalers) scalers.push_back(scaler_to_json(s));
  j["input_scalers"] = std::move(scalers);
  j["target_scaler"] = scaler_to_json(net.target_scaler);
  return j;
}

TrainedMlp net_from_json(const json& j) {
  TrainedMlp net;
  net.spec = spec_from_json(j.at("spec"));
  net.epochs_run = j.at("epochs_run").get<Index>();
  for (const auto& layer : j.at("layers")) {
    const Index rows = layer.at("rows").get<Index>();
    const Index cols = layer.at("cols").get<Index>();
    const auto w = layer.at("w").get<std::vector<double>>();
    if (static_cast<Index>(w.size()) != rows * cols)
      throw DataError("model layer weight count does not match its shape");
    Matrix wm(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        wm(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    net.weights.push_back(std::move(wm));
    const auto b = layer.at("b").get<std::vector<double>>();
    if (static_cast<Index>(b.size()) != rows)
      throw DataError("model layer bias count does not match its shape");
    Vector bv(rows);
    for (Index r = 0; r < rows; ++r) bv(r) = b[static_cast<std::size_t>(r)];
    net.biases.push_back(std::move(bv));
  }
  for (const auto& s : j.at("input_scalers"))
    net.input_scalers.push_back(scaler_from_json(s));
  net.target_scaler = scaler_from_json(j.at("target_scaler"));
  return net;
}

}  // namespace

void save_model(const std::filesystem::path& file, const FusedModel& model) {
  json j;
  j["version"] = 1;
  j["forest_hash"] = to_hex(model.forest_hash);
  j["trained_on"] = model.trained_on;
  j["feature_cap"] = model.feature_cap;
  j["spec1"] = spec_to_json(model.spec1);
  j["s2"] = net_to_json(model.s2);
  std::ofstream out(file);
  if (!out) throw DataError("cannot write model file: " + file.string());
  out << j.dump(2) << '\n';
}

FusedModel load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open model file: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str());
  if (j.at("version").get<int>() != 1) throw DataError("unsupported model version");
  FusedModel model;
  model.forest_hash = from_hex(j.at("forest_hash").get<std::string>());
  model.trained_on = j.at("trained_on").get<Index>();
  model.feature_cap = j.at("feature_cap").get<Index>();
  model.spec1 = spec_from_json(j.at("spec1"));
  model.s2 = net_from_json(j.at("s2"));
  return model;
}

FusedModel load_model(const std::filesystem::path& file,
                      std::uint64_t expected_forest_hash) {
  FusedModel model = load_model(file);
  if (model.forest_hash != expected_forest_hash)
    throw DataError("model was trained against a different forest (stale model)");
  return model;
}

}  // namespace fes
