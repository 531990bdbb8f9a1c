#include "fes/synth.hpp"

#include "fes/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace fes {

namespace {

struct SiteCenter {
  double lat;
  double lon;
};

// Mutually distant anchor points; per-entity jitter is a few degrees, far
// smaller than any inter-site distance.
constexpr std::array<SiteCenter, 8> kSites = {{{39.0, -98.0},
                                               {50.0, 10.0},
                                               {21.0, 78.0},
                                               {35.0, 104.0},
                                               {-25.0, 134.0},
                                               {-10.0, -55.0},
                                               {2.0, 22.0},
                                               {36.0, 138.0}}};

// Directional latency factor between sites: cheap within a site, a spread of
// slower tiers across sites.
double site_affinity(Index a, Index b) {
  if (a == b) return 0.5;
  return 1.0 + 0.4 * static_cast<double>((a * 7 + b * 3) % 4);
}

// Contiguous index ranges per site. The first site takes the dominant share,
// the remainder is split as evenly as possible.
std::vector<Index> assign_sites(Index n, Index n_sites, double dominant) {
  std::vector<Index> site_of(static_cast<std::size_t>(n), 0);
  if (n_sites == 1) return site_of;
  Index head = static_cast<Index>(std::llround(dominant * static_cast<double>(n)));
  head = std::clamp<Index>(head, 1, n);
  const Index rest = n - head;
  const Index tail_sites = n_sites - 1;
  Index next = head;
  for (Index k = 1; k < n_sites; ++k) {
    Index count = rest / tail_sites + (k <= rest % tail_sites ? 1 : 0);
    for (Index i = 0; i < count; ++i) site_of[static_cast<std::size_t>(next++)] = k;
  }
  return site_of;
}

std::vector<GeoContext> place_entities(const std::vector<Index>& site_of, Rng& rng) {
  std::vector<GeoContext> out;
  out.reserve(site_of.size());
  for (Index site : site_of) {
    const SiteCenter& c = kSites[static_cast<std::size_t>(site)];
    const double lat =
        std::clamp(c.lat + uniform_real(rng, -3.0, 3.0), -90.0, 90.0);
    const double lon = c.lon + uniform_real(rng, -3.0, 3.0);
    out.emplace_back(lat, lon);
  }
  return out;
}

// One factor per (entity, opposite-axis site). Factors for every site are
// drawn whether or not that block ends up observed, so the values of the
// observed cells depend only on the seed, never on the density.
std::vector<double> draw_factors(Index n, Index n_sites, double spread, Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(n * n_sites));
  for (auto& v : f) v = uniform_real(rng, 1.0 - spread, 1.0 + spread);
  return f;
}

}  // namespace

DatasetBundle make_synthetic(const SynthSpec& spec) {
  if (spec.n_users < 1 || spec.n_services < 1)
    throw ConfigError("synthetic workload needs at least one user and service");
  if (spec.n_sites < 1 || spec.n_sites > static_cast<Index>(kSites.size()))
    throw ConfigError("synthetic workload supports 1 to 8 sites");
  if (spec.dominant_share <= 0.0 || spec.dominant_share > 1.0)
    throw ConfigError("synthetic dominant share must lie in (0, 1]");
  if (spec.density <= 0.0 || spec.density > 1.0)
    throw ConfigError("synthetic density must lie in (0, 1]");
  if (spec.noise < 0.0 || spec.noise >= 1.0)
    throw ConfigError("synthetic noise must lie in [0, 1)");
  if (spec.factor_spread < 0.0 || spec.factor_spread >= 1.0)
    throw ConfigError("synthetic factor spread must lie in [0, 1)");

  DatasetBundle bundle;
  bundle.qos_kind = QosKind::RT;

  const auto user_site = assign_sites(spec.n_users, spec.n_sites, spec.dominant_share);
  const auto service_site =
      assign_sites(spec.n_services, spec.n_sites, spec.dominant_share);

  Rng ctx_users(mix_seed(spec.seed, 1));
  Rng ctx_services(mix_seed(spec.seed, 2));
  const auto user_ctx = place_entities(user_site, ctx_users);
  const auto service_ctx = place_entities(service_site, ctx_services);
  if (spec.with_contexts) {
    bundle.user_contexts = user_ctx;
    bundle.service_contexts = service_ctx;
  }

  Rng user_rng(mix_seed(spec.seed, 3));
  Rng service_rng(mix_seed(spec.seed, 5));
  const auto uf = draw_factors(spec.n_users, spec.n_sites, spec.factor_spread, user_rng);
  const auto sf =
      draw_factors(spec.n_services, spec.n_sites, spec.factor_spread, service_rng);

  Rng cells(mix_seed(spec.seed, 4));
  bundle.matrix = QosMatrix(spec.n_users, spec.n_services);
  for (Index u = 0; u < spec.n_users; ++u)
    for (Index s = 0; s < spec.n_services; ++s) {
      const double jitter = 1.0 + spec.noise * (2.0 * uniform01(cells) - 1.0);
      const bool observed = uniform01(cells) < spec.density;
      if (!observed) continue;
      const Index su = user_site[static_cast<std::size_t>(u)];
      const Index ss = service_site[static_cast<std::size_t>(s)];
      bundle.matrix.values(u, s) =
          site_affinity(su, ss) * uf[static_cast<std::size_t>(u * spec.n_sites + ss)] *
          sf[static_cast<std::size_t>(s * spec.n_sites + su)] * jitter;
    }
  return bundle;
}

}  // namespace fes
