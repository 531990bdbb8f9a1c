#include "fes/dataset.hpp"

#include "fes/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fes {

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(std::move(t));
  return toks;
}

std::vector<GeoContext> load_context_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open context file: " + file.string());
  std::vector<GeoContext> contexts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks.size() < 3)
      throw DataError(file.string() + ":" + std::to_string(lineno) +
                      ": expected id, latitude, longitude");
    double lat = 0.0, lon = 0.0;
    if (!parse_double(toks[1], lat) || !parse_double(toks[2], lon))
      throw DataError(file.string() + ":" + std::to_string(lineno) +
                      ": non-numeric coordinate");
    try {
      contexts.emplace_back(lat, lon);
    } catch (const DataError& e) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return contexts;
}

std::filesystem::path find_matrix_file(const std::filesystem::path& dir, QosKind kind) {
  const std::string preferred = std::string(to_string(kind)) + "Matrix.txt";
  for (const auto& name : {preferred, std::string("matrix.txt")}) {
    auto p = dir / name;
    if (std::filesystem::exists(p)) return p;
  }
  throw DataError("no matrix file (" + preferred + " or matrix.txt) in " + dir.string());
}

}  // namespace

Matrix read_matrix_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open matrix file: " + file.string());

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto& t : toks) {
      double v = 0.0;
      if (!parse_double(t, v))
        throw DataError(file.string() + ":" + std::to_string(lineno) +
                        ": non-numeric token '" + t + "'");
      row.push_back(v);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": row has " +
                      std::to_string(row.size()) + " values, expected " +
                      std::to_string(width));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(file.string() + ": empty matrix file");

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void write_matrix_file(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write matrix file: " + file.string());
  char buf[64];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void write_context_file(const std::filesystem::path& file,
                        const std::vector<GeoContext>& contexts) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write context file: " + file.string());
  char buf[96];
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g", i, contexts[i].latitude,
                  contexts[i].longitude);
    out << buf << '\n';
  }
}

std::vector<GeoContext> read_context_file(const std::filesystem::path& file) {
  return load_context_file(file);
}

DatasetBundle load_wsdream(const std::filesystem::path& dir, QosKind kind) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("dataset path is not a directory: " + dir.string());

  DatasetBundle bundle;
  bundle.qos_kind = kind;

  Matrix raw = read_matrix_file(find_matrix_file(dir, kind));
  // Raw files use a negative sentinel for "never invoked"; canonical form is 0.
  bundle.matrix.values = (raw.array() < 0.0).select(0.0, raw);

  const auto users_file = dir / "users.txt";
  const auto services_file = dir / "services.txt";
  if (std::filesystem::exists(users_file))
    bundle.user_contexts = load_context_file(users_file);
  if (std::filesystem::exists(services_file))
    bundle.service_contexts = load_context_file(services_file);

  bundle.check();
  return bundle;
}

void export_triples_csv(const std::filesystem::path& file, const QosMatrix& m) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write csv: " + file.string());
  out << "user,service,value\n";
  char buf[64];
  for (Index u = 0; u < m.n_users(); ++u)
    for (Index s = 0; s < m.n_services(); ++s)
      if (m.valid(u, s)) {
        std::snprintf(buf, sizeof(buf), "%.17g", m.values(u, s));
        out << u << ',' << s << ',' << buf << '\n';
      }
}

QosMatrix import_triples_csv(const std::filesystem::path& file, Index n_users,
                             Index n_services) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open csv: " + file.string());
  QosMatrix m(n_users, n_services);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;  // header
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    long long u = -1, s = -1;
    double v = 0.0;
    if (!(is >> u >> s >> v))
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": malformed triple");
    if (u < 0 || u >= n_users || s < 0 || s >= n_services)
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": id out of range");
    m.values(u, s) = v;
  }
  return m;
}

SplitResult split(const DatasetBundle& bundle, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");

  IndexedCells valid;
  const auto& m = bundle.matrix;
  for (Index u = 0; u < m.n_users(); ++u)
    for (Index s = 0; s < m.n_services(); ++s)
      if (m.valid(u, s)) valid.push_back({u, s, m.values(u, s)});

  if (valid.empty()) throw DataError("bundle has no valid entries to split");
  const auto n_train = static_cast<std::size_t>(spec.train_fraction *
                                                static_cast<double>(valid.size()));
  if (n_train < 1) throw ConfigError("train_fraction keeps no entries for training");

  Rng rng(spec.seed);
  shuffle(valid, rng);

  const std::size_t n_rest = valid.size() - n_train;
  const std::size_t n_val = n_rest / 3;  // validation : test = 1 : 2

  SplitResult out;
  out.train = QosMatrix(m.n_users(), m.n_services());
  for (std::size_t i = 0; i < n_train; ++i)
    out.train.values(valid[i].user, valid[i].service) = valid[i].value;
  out.val.assign(valid.begin() + static_cast<std::ptrdiff_t>(n_train),
                 valid.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(valid.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                  valid.end());
  return out;
}

std::pair<QosMatrix, std::vector<Index>> mask_cold_start(const QosMatrix& matrix,
                                                         bool mask_users,
                                                         double fraction,
                                                         std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw ConfigError("cold-start fraction must lie in [0, 1)");

  const Index n = mask_users ? matrix.n_users() : matrix.n_services();
  const auto k = static_cast<std::size_t>(fraction * static_cast<double>(n));

  Rng rng(seed);
  auto picked = sample_indices(static_cast<std::size_t>(n), k, rng);

  QosMatrix masked = matrix;
  std::vector<Index> ids;
  ids.reserve(picked.size());
  for (auto i : picked) {
    const auto id = static_cast<Index>(i);
    ids.push_back(id);
    if (mask_users)
      masked.values.row(id).setZero();
    else
      masked.values.col(id).setZero();
  }
  return {std::move(masked), std::move(ids)};
}

DatasetBundle augment(const DatasetBundle& bundle, Index user_factor,
                      Index service_factor, std::uint64_t seed, double jitter) {
  if (user_factor < 1 || service_factor < 1)
    throw ConfigError("augmentation factors must be >= 1");

  const auto& src = bundle.matrix.values;
  const Index n = src.rows(), m = src.cols();

  DatasetBundle out;
  out.qos_kind = bundle.qos_kind;
  out.matrix = QosMatrix(user_factor * n, service_factor * m);

  Rng rng(mix_seed(seed, 0x61756721));
  for (Index a = 0; a < user_factor; ++a)
    for (Index b = 0; b < service_factor; ++b) {
      auto block = out.matrix.values.block(a * n, b * m, n, m);
      if (a == 0 && b == 0) {
        block = src;
        continue;
      }
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j)
          if (src(i, j) > 0.0)
            block(i, j) = src(i, j) * uniform_real(rng, 1.0 - jitter, 1.0 + jitter);
    }

  // ~0.02 deg keeps replicas inside their source's geographic neighborhood.
  const double coord_jitter = 0.02;
  auto replicate_contexts = [&](const std::vector<GeoContext>& src_ctx, Index factor) {
    std::vector<GeoContext> ctx;
    ctx.reserve(src_ctx.size() * static_cast<std::size_t>(factor));
    for (Index a = 0; a < factor; ++a)
      for (const auto& c : src_ctx) {
        if (a == 0) {
          ctx.push_back(c);
          continue;
        }
        double lat = c.latitude + uniform_real(rng, -coord_jitter, coord_jitter);
        double lon = c.longitude + uniform_real(rng, -coord_jitter, coord_jitter);
        lat = std::clamp(lat, -90.0, 90.0);
        if (lon > 180.0) lon -= 360.0;
        if (lon < -180.0) lon += 360.0;
        ctx.emplace_back(lat, lon);
      }
    return ctx;
  };
  if (!bundle.user_contexts.empty())
    out.user_contexts = replicate_contexts(bundle.user_contexts, user_factor);
  if (!bundle.service_contexts.empty())
    out.service_contexts = replicate_contexts(bundle.service_contexts, service_factor);

  out.check();
  return out;
}

}  // namespace fes
