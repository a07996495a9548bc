#pragma once

#include <cmath>
#include <cstdint>

#include <boost/random/poisson_distribution.hpp>

namespace rydtx {

/// Poisson sample; mean 0 short-circuits (Boost requires a positive mean).
template <typename Rng>
std::int64_t sample_poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  boost::random::poisson_distribution<std::int64_t, double> dist(mean);
  return dist(rng);
}

/// Exponential sample by inversion; an infinite mean returns infinity.
template <typename Rng>
double sample_exponential(double mean, Rng& rng) {
  if (std::isinf(mean)) return mean;
  return -mean * std::log1p(-rng.uniform());
}

}  // namespace rydtx
