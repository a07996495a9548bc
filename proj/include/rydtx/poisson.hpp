#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace rydtx::poisson {

/// P(N = k) for N ~ Poisson(mean); mean = 0 is the point mass at zero.
inline double pmf(std::int64_t k, double mean) {
  if (k < 0) return 0.0;
  if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
}

/// P(N <= k).
inline double cdf(std::int64_t k, double mean) {
  if (k < 0) return 0.0;
  if (mean == 0.0) return 1.0;
  return boost::math::gamma_q(static_cast<double>(k) + 1.0, mean);
}

/// P(N > k), computed without cancellation.
inline double sf(std::int64_t k, double mean) {
  if (k < 0) return 1.0;
  if (mean == 0.0) return 0.0;
  return boost::math::gamma_p(static_cast<double>(k) + 1.0, mean);
}

/// P(N >= k).
inline double tail_from(std::int64_t k, double mean) { return sf(k - 1, mean); }

/// Smallest k with P(N <= k) >= p.
inline std::int64_t quantile(double p, double mean) {
  if (mean == 0.0) return 0;
  using boost::math::policies::discrete_quantile;
  using boost::math::policies::integer_round_up;
  using Policy = boost::math::policies::policy<discrete_quantile<integer_round_up>>;
  boost::math::poisson_distribution<double, Policy> dist(mean);
  return static_cast<std::int64_t>(boost::math::quantile(dist, p));
}

/// Smallest k with P(N > k) <= q, for tiny q where 1 - q would round.
inline std::int64_t upper_quantile(double q, double mean) {
  if (mean == 0.0) return 0;
  using boost::math::policies::discrete_quantile;
  using boost::math::policies::integer_round_up;
  using Policy = boost::math::policies::policy<discrete_quantile<integer_round_up>>;
  boost::math::poisson_distribution<double, Policy> dist(mean);
  return static_cast<std::int64_t>(boost::math::quantile(boost::math::complement(dist, q)));
}

/// Law of min(N, cap): entries 0..cap, the last holding the tail mass.
inline std::vector<double> capped_weights(double mean, int cap) {
  std::vector<double> w(static_cast<std::size_t>(cap) + 1);
  for (int k = 0; k < cap; ++k) w[k] = pmf(k, mean);
  w[cap] = tail_from(cap, mean);
  return w;
}

}  // namespace rydtx::poisson
