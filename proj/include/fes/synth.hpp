#ifndef FES_SYNTH_HPP
#define FES_SYNTH_HPP

#include "fes/types.hpp"

#include <cstdint>

namespace fes {

/// Parameters for the built-in synthetic workload. Users and services are
/// spread over a handful of geographic sites, with the first site holding a
/// dominant share of the entities. Response time is site-pair affinity x a
/// per-(user, service-site) factor x a per-(service, user-site) factor, with
/// small multiplicative noise. Each site-pair block is rank one up to noise
/// while the matrix as a whole is not low rank, and rows within a site stay
/// nearly proportional, so the clustering, per-cluster fill, and both
/// regression stages all have real structure to find.
struct SynthSpec {
  Index n_users = 60;
  Index n_services = 240;
  Index n_sites = 4;            // at most 8
  double dominant_share = 0.7;  // fraction of entities on the first site
  double density = 1.0;         // fraction of cells observed
  double noise = 0.05;          // multiplicative noise amplitude
  double factor_spread = 0.2;   // per-entity factors drawn from 1 +/- spread
  std::uint64_t seed = 7;
  bool with_contexts = true;
};

DatasetBundle make_synthetic(const SynthSpec& spec);

}  // namespace fes

#endif  // FES_SYNTH_HPP
