#include "fes/imputation.hpp"

#include "fes/dataset.hpp"
#include "fes/hash.hpp"
#include "fes/metrics.hpp"
#include "fes/parallel.hpp"
#include "fes/rng.hpp"
#include "json_detail.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fes {

using nlohmann::json;

namespace {

Index pos_in(const std::vector<Index>& ids, Index global, const char* what) {
  const auto it = std::lower_bound(ids.begin(), ids.end(), global);
  if (it == ids.end() || *it != global)
    throw DataError(std::string("id not present in this cluster's ") + what);
  return static_cast<Index>(it - ids.begin());
}

}  // namespace

Index FilledMatrix::row_pos(Index global_user) const {
  return pos_in(row_ids, global_user, "rows");
}

Index FilledMatrix::col_pos(Index global_service) const {
  return pos_in(col_ids, global_service, "columns");
}

QosMatrix cf_fill(const QosMatrix& sub, Index top_k) {
  if (sub.valid_count() == 0)
    throw DataError("cf_fill: nothing to anchor imputation (all cells missing)");
  if (top_k < 1) throw ConfigError("cf_fill: top_k must be >= 1");

  const Index m = sub.n_users(), n = sub.n_services();
  const Matrix sim = pairwise_cosine(sub.values.transpose());

  Vector user_mean = Vector::Zero(m), col_mean = Vector::Zero(n);
  Vector user_cnt = Vector::Zero(m), col_cnt = Vector::Zero(n);
  double global_sum = 0.0;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (sub.valid(i, j)) {
        const double v = sub.values(i, j);
        user_mean(i) += v;
        col_mean(j) += v;
        user_cnt(i) += 1.0;
        col_cnt(j) += 1.0;
        global_sum += v;
      }
  const double global_mean = global_sum / static_cast<double>(sub.valid_count());
  for (Index i = 0; i < m; ++i)
    if (user_cnt(i) > 0.0) user_mean(i) /= user_cnt(i);
  for (Index j = 0; j < n; ++j)
    if (col_cnt(j) > 0.0) col_mean(j) /= col_cnt(j);

  QosMatrix out = sub;
  std::vector<std::pair<double, Index>> cands;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      if (sub.valid(i, j)) continue;
      cands.clear();
      for (Index r = 0; r < m; ++r)
        if (r != i && sub.valid(r, j) && sim(i, r) > 0.0)
          cands.emplace_back(sim(i, r), r);
      double fill;
      if (!cands.empty()) {
        // Most similar first; ties broken toward the lower user id.
        std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
          return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        if (static_cast<Index>(cands.size()) > top_k)
          cands.resize(static_cast<std::size_t>(top_k));
        double num = 0.0, den = 0.0;
        for (const auto& [s, r] : cands) {
          num += s * sub.values(r, j);
          den += s;
        }
        fill = num / den;
      } else if (user_cnt(i) > 0.0) {
        fill = user_mean(i);
      } else if (col_cnt(j) > 0.0) {
        fill = col_mean(j);
      } else {
        fill = global_mean;
      }
      out.values(i, j) = fill;
    }
  return out;
}

QosMatrix mf_fill(const QosMatrix& sub, const MfParams& params,
                  std::vector<double>* epoch_objective) {
  if (sub.valid_count() == 0)
    throw DataError("mf_fill: nothing to anchor imputation (all cells missing)");
  if (params.rank < 1) throw ConfigError("mf_fill: rank must be >= 1");
  if (params.lr <= 0.0 || params.reg < 0.0 || params.epochs < 1)
    throw ConfigError("mf_fill: bad training parameters");

  const Index m = sub.n_users(), n = sub.n_services();
  const Index rank = std::min(params.rank, std::min(m, n));

  std::vector<std::pair<Index, Index>> cells;
  cells.reserve(static_cast<std::size_t>(sub.valid_count()));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (sub.valid(i, j)) cells.emplace_back(i, j);

  Rng rng(params.seed);
  Matrix P(m, rank), Q(n, rank);
  for (Index i = 0; i < m; ++i)
    for (Index k = 0; k < rank; ++k) P(i, k) = uniform_real(rng, 0.0, 0.1);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < rank; ++k) Q(j, k) = uniform_real(rng, 0.0, 0.1);

  if (epoch_objective) epoch_objective->clear();
  Vector p_old(rank);
  for (Index epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle(cells, rng);
    for (const auto& [i, j] : cells) {
      const double err = sub.values(i, j) - P.row(i).dot(Q.row(j));
      p_old = P.row(i);
      P.row(i) += params.lr * (err * Q.row(j) - params.reg * P.row(i));
      Q.row(j) += params.lr * (err * p_old.transpose() - params.reg * Q.row(j));
    }
    if (epoch_objective) {
      double sq = 0.0;
      for (const auto& [i, j] : cells) {
        const double err = sub.values(i, j) - P.row(i).dot(Q.row(j));
        sq += err * err;
      }
      epoch_objective->push_back(sq + params.reg *
                                          (P.squaredNorm() + Q.squaredNorm()));
    }
  }

  QosMatrix out = sub;
  out.values = (P * Q.transpose()).cwiseMax(1e-6);
  for (const auto& [i, j] : cells) out.values(i, j) = sub.values(i, j);
  return out;
}

const StoreEntry& PreprocessedStore::entry(ForestMode mode, int first_id,
                                           int second_id) const {
  const auto& per_mode = entries_[mode == ForestMode::UICL ? 0 : 1];
  if (first_id < 0 || static_cast<std::size_t>(first_id) >= per_mode.size() ||
      second_id < 0 ||
      static_cast<std::size_t>(second_id) >= per_mode[static_cast<std::size_t>(first_id)].size())
    throw DataError("store entry out of range");
  return per_mode[static_cast<std::size_t>(first_id)][static_cast<std::size_t>(second_id)];
}

StoreEntry& PreprocessedStore::slot(ForestMode mode, int first_id, int second_id) {
  auto& per_mode = entries_[mode == ForestMode::UICL ? 0 : 1];
  return per_mode[static_cast<std::size_t>(first_id)][static_cast<std::size_t>(second_id)];
}

void PreprocessedStore::shape_from(const ForestPair& forests) {
  forest_hash = forests.fingerprint();
  for (int mi = 0; mi < 2; ++mi) {
    const ClusterForest& f = mi == 0 ? forests.uicl : forests.sicl;
    entries_[static_cast<std::size_t>(mi)].assign(f.first_level.size(), {});
    for (std::size_t k = 0; k < f.first_level.size(); ++k)
      entries_[static_cast<std::size_t>(mi)][k].resize(f.second_level[k].size());
  }
}

FilledQuad PreprocessedStore::lookup(const ForestPair& forests, Index user,
                                     Index service) const {
  if (forests.fingerprint() != forest_hash)
    throw DataError("store was built for a different forest pair");
  const auto [uf, us] = forests.uicl.pair_index(user, service);
  const auto [sf, ss] = forests.sicl.pair_index(user, service);
  FilledQuad quad;
  const StoreEntry& ue = entry(ForestMode::UICL, uf, us);
  const StoreEntry& se = entry(ForestMode::SICL, sf, ss);
  quad.q_u_c = &ue.cf;
  quad.q_u_m = &ue.mf;
  quad.q_s_c = &se.cf;
  quad.q_s_m = &se.mf;
  return quad;
}

Index PreprocessedStore::total_cells() const {
  Index total = 0;
  for (const auto& per_mode : entries_)
    for (const auto& row : per_mode)
      for (const auto& e : row) total += e.cf.values.size() + e.mf.values.size();
  return total;
}

std::uint64_t PreprocessedStore::fingerprint() const {
  std::uint64_t h = fnv1a(&forest_hash, sizeof(forest_hash));
  for (const auto& per_mode : entries_)
    for (const auto& row : per_mode)
      for (const auto& e : row) {
        const std::uint64_t hc = matrix_hash(e.cf.values);
        const std::uint64_t hm = matrix_hash(e.mf.values);
        h = fnv1a(&hc, sizeof(hc), h);
        h = fnv1a(&hm, sizeof(hm), h);
      }
  return h;
}

namespace {

struct FillTask {
  ForestMode mode;
  int first;
  int second;
  std::uint64_t stream;  // seed stream index, stable across runs
};

std::vector<FillTask> enumerate_tasks(const ForestPair& forests) {
  std::vector<FillTask> tasks;
  std::uint64_t stream = 0;
  for (int mi = 0; mi < 2; ++mi) {
    const ClusterForest& f = mi == 0 ? forests.uicl : forests.sicl;
    for (std::size_t k = 0; k < f.first_level.size(); ++k)
      for (std::size_t c = 0; c < f.second_level[k].size(); ++c)
        tasks.push_back({mi == 0 ? ForestMode::UICL : ForestMode::SICL,
                         static_cast<int>(k), static_cast<int>(c), stream++});
  }
  return tasks;
}

// Sub-matrix of the training log owned by one multi-level cluster.
QosMatrix extract_sub(const QosMatrix& matrix, const std::vector<Index>& rows,
                      const std::vector<Index>& cols) {
  QosMatrix sub;
  sub.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      sub.values(static_cast<Index>(r), static_cast<Index>(c)) =
          matrix.values(rows[r], cols[c]);
  return sub;
}

StoreEntry fill_one(const QosMatrix& matrix, const ForestPair& forests,
                    const MfParams& mf, const FillTask& t) {
  const ClusterForest& f = t.mode == ForestMode::UICL ? forests.uicl : forests.sicl;
  const auto [rows, cols] = f.multilevel_members(t.first, t.second);

  StoreEntry e;
  e.cf.row_ids = rows;
  e.cf.col_ids = cols;
  QosMatrix sub = extract_sub(matrix, rows, cols);
  if (sub.valid_count() == 0) {
    // Nothing local to anchor on; fall back to the global training mean.
    const double gm = matrix.values.sum() / std::max<double>(1.0, matrix.valid_count());
    e.cf.values = Matrix::Constant(sub.n_users(), sub.n_services(),
                                   gm > 0.0 ? gm : 1e-6);
    e.mf = e.cf;
    return e;
  }
  e.cf.values = cf_fill(sub).values;
  MfParams local = mf;
  local.seed = mix_seed(mf.seed, t.stream);
  e.mf.row_ids = rows;
  e.mf.col_ids = cols;
  e.mf.values = mf_fill(sub, local).values;
  return e;
}

}  // namespace

PreprocessedStore preprocess_all(const QosMatrix& matrix, const ForestPair& forests,
                                 const MfParams& mf) {
  PreprocessedStore store;
  store.mf_params = mf;
  store.shape_from(forests);
  const std::vector<FillTask> tasks = enumerate_tasks(forests);
  parallel_for(static_cast<Index>(tasks.size()), [&](Index ti) {
    const FillTask& t = tasks[static_cast<std::size_t>(ti)];
    store.slot(t.mode, t.first, t.second) = fill_one(matrix, forests, mf, t);
  });
  return store;
}

namespace {

std::string entry_stem(const FillTask& t) {
  std::ostringstream os;
  os << 'c' << t.first << '_' << t.second;
  return os.str();
}

using detail::mf_from_json;
using detail::mf_to_json;

bool mf_equal(const MfParams& a, const MfParams& b) {
  return a.rank == b.rank && a.reg == b.reg && a.lr == b.lr && a.epochs == b.epochs &&
         a.seed == b.seed;
}

json store_manifest(const PreprocessedStore& store, const ForestPair& forests,
                    const std::vector<char>& done) {
  json j;
  j["version"] = 1;
  j["forest_hash"] = to_hex(store.forest_hash);
  j["mf"] = mf_to_json(store.mf_params);
  json entries = json::array();
  const std::vector<FillTask> tasks = enumerate_tasks(forests);
  for (const FillTask& t : tasks) {
    if (!done[static_cast<std::size_t>(t.stream)]) continue;
    const StoreEntry& e = store.entry(t.mode, t.first, t.second);
    json row;
    row["mode"] = to_string(t.mode);
    row["first"] = t.first;
    row["second"] = t.second;
    row["rows"] = e.cf.row_ids;
    row["cols"] = e.cf.col_ids;
    row["cf_hash"] = to_hex(matrix_hash(e.cf.values));
    row["mf_hash"] = to_hex(matrix_hash(e.mf.values));
    row["stem"] = entry_stem(t);
    entries.push_back(std::move(row));
  }
  j["entries"] = std::move(entries);
  return j;
}

void write_manifest(const std::filesystem::path& dir, const json& manifest) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write store manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

void write_entry_files(const std::filesystem::path& dir, const FillTask& t,
                       const StoreEntry& e) {
  const auto mode_dir = dir / to_string(t.mode);
  std::filesystem::create_directories(mode_dir);
  write_matrix_file(mode_dir / (entry_stem(t) + ".cf.txt"), e.cf.values);
  write_matrix_file(mode_dir / (entry_stem(t) + ".mf.txt"), e.mf.values);
}

// Loads one persisted entry if its manifest row, files, and hashes all agree.
bool try_load_entry(const std::filesystem::path& dir, const json& manifest,
                    const FillTask& t, const ForestPair& forests, StoreEntry& out) {
  if (!manifest.contains("entries")) return false;
  for (const auto& row : manifest.at("entries")) {
    if (row.at("mode").get<std::string>() != to_string(t.mode) ||
        row.at("first").get<int>() != t.first || row.at("second").get<int>() != t.second)
      continue;
    const ClusterForest& f = t.mode == ForestMode::UICL ? forests.uicl : forests.sicl;
    const auto [rows, cols] = f.multilevel_members(t.first, t.second);
    if (row.at("rows").get<std::vector<Index>>() != rows ||
        row.at("cols").get<std::vector<Index>>() != cols)
      return false;
    const auto mode_dir = dir / to_string(t.mode);
    const auto cf_file = mode_dir / (entry_stem(t) + ".cf.txt");
    const auto mf_file = mode_dir / (entry_stem(t) + ".mf.txt");
    if (!std::filesystem::exists(cf_file) || !std::filesystem::exists(mf_file))
      return false;
    Matrix cf = read_matrix_file(cf_file);
    Matrix mf = read_matrix_file(mf_file);
    if (to_hex(matrix_hash(cf)) != row.at("cf_hash").get<std::string>() ||
        to_hex(matrix_hash(mf)) != row.at("mf_hash").get<std::string>())
      return false;
    out.cf.values = std::move(cf);
    out.mf.values = std::move(mf);
    out.cf.row_ids = rows;
    out.cf.col_ids = cols;
    out.mf.row_ids = rows;
    out.mf.col_ids = cols;
    return true;
  }
  return false;
}

}  // namespace

PreprocessedStore preprocess_resumable(const std::filesystem::path& dir,
                                       const QosMatrix& matrix,
                                       const ForestPair& forests, const MfParams& mf) {
  std::filesystem::create_directories(dir);
  PreprocessedStore store;
  store.mf_params = mf;
  store.shape_from(forests);

  json previous;
  const auto manifest_file = dir / "manifest.json";
  if (std::filesystem::exists(manifest_file)) {
    std::ifstream in(manifest_file);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      previous = json::parse(ss.str());
    } catch (const json::exception&) {
      previous = json::object();  // corrupt manifest: rebuild everything
    }
    const bool compatible = previous.contains("forest_hash") &&
                            previous.at("forest_hash") == to_hex(store.forest_hash) &&
                            previous.contains("mf") &&
                            mf_equal(mf_from_json(previous.at("mf")), mf);
    if (!compatible) previous = json::object();
  }

  const std::vector<FillTask> tasks = enumerate_tasks(forests);
  std::vector<char> done(tasks.size(), 0);
  for (const FillTask& t : tasks) {
    StoreEntry& slot = store.slot(t.mode, t.first, t.second);
    if (!try_load_entry(dir, previous, t, forests, slot)) {
      slot = fill_one(matrix, forests, mf, t);
      write_entry_files(dir, t, slot);
    }
    done[static_cast<std::size_t>(t.stream)] = 1;
    write_manifest(dir, store_manifest(store, forests, done));
  }
  return store;
}

void save_store(const std::filesystem::path& dir, const PreprocessedStore& store) {
  std::filesystem::create_directories(dir);
  // The manifest rebuild below needs forest structure; entries carry their own
  // id maps, so reconstruct tasks straight from the stored shapes.
  std::vector<FillTask> tasks;
  std::uint64_t stream = 0;
  for (int mi = 0; mi < 2; ++mi)
    for (std::size_t k = 0; k < store.modes()[static_cast<std::size_t>(mi)].size(); ++k)
      for (std::size_t c = 0; c < store.modes()[static_cast<std::size_t>(mi)][k].size(); ++c)
        tasks.push_back({mi == 0 ? ForestMode::UICL : ForestMode::SICL,
                         static_cast<int>(k), static_cast<int>(c), stream++});

  json j;
  j["version"] = 1;
  j["forest_hash"] = to_hex(store.forest_hash);
  j["mf"] = mf_to_json(store.mf_params);
  json entries = json::array();
  for (const FillTask& t : tasks) {
    const StoreEntry& e = store.entry(t.mode, t.first, t.second);
    write_entry_files(dir, t, e);
    json row;
    row["mode"] = to_string(t.mode);
    row["first"] = t.first;
    row["second"] = t.second;
    row["rows"] = e.cf.row_ids;
    row["cols"] = e.cf.col_ids;
    row["cf_hash"] = to_hex(matrix_hash(e.cf.values));
    row["mf_hash"] = to_hex(matrix_hash(e.mf.values));
    row["stem"] = entry_stem(t);
    entries.push_back(std::move(row));
  }
  j["entries"] = std::move(entries);
  write_manifest(dir, j);
}

PreprocessedStore load_store(const std::filesystem::path& dir,
                             const ForestPair& forests) {
  const auto manifest_file = dir / "manifest.json";
  std::ifstream in(manifest_file);
  if (!in) throw DataError("no store manifest in " + dir.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json manifest = json::parse(ss.str());
  if (manifest.at("version").get<int>() != 1)
    throw DataError("unsupported store version");

  PreprocessedStore store;
  store.mf_params = mf_from_json(manifest.at("mf"));
  store.shape_from(forests);
  if (manifest.at("forest_hash").get<std::string>() != to_hex(store.forest_hash))
    throw DataError("store was persisted for a different forest pair");

  const std::vector<FillTask> tasks = enumerate_tasks(forests);
  for (const FillTask& t : tasks) {
    StoreEntry& slot = store.slot(t.mode, t.first, t.second);
    if (!try_load_entry(dir, manifest, t, forests, slot)) {
      std::ostringstream err;
      err << "store entry " << to_string(t.mode) << '/' << entry_stem(t)
          << " missing or corrupt in " << dir.string();
      throw DataError(err.str());
    }
  }
  return store;
}

}  // namespace fes
