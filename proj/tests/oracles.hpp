#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library's evaluation paths.

#include <algorithm>
#include <cmath>
#include <vector>

namespace rydtx::oracle {

/// Poisson pmf by the recurrence p(k) = p(k-1) mean / k.
inline std::vector<double> poisson_pmf_table(double mean, int k_max) {
  std::vector<double> p(static_cast<std::size_t>(k_max) + 1);
  p[0] = std::exp(-mean);
  for (int k = 1; k <= k_max; ++k) p[k] = p[k - 1] * mean / k;
  return p;
}

/// 1 - sum_{k=0}^{k_max} Poisson(mean; k) exp(-min(k, cap) od), term by term.
inline double truncated_contrast(double mean, double od, int cap, int k_max = 200) {
  const auto p = poisson_pmf_table(mean, k_max);
  double s = 0.0;
  for (int k = 0; k <= k_max; ++k) s += p[k] * std::exp(-std::min(k, cap) * od);
  return 1.0 - s;
}

/// E[min(N, cap)] by direct summation.
inline double capped_mean(double mean, int cap, int k_max = 200) {
  const auto p = poisson_pmf_table(mean, k_max);
  double s = 0.0;
  for (int k = 0; k <= k_max; ++k) s += std::min(k, cap) * p[k];
  return s;
}

/// Composite Simpson quadrature of f over [a, b] with n (even) panels.
template <typename F>
double simpson(F&& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

/// Time-averaged transmission with k excitations of exponential lifetime tau.
inline double window_transmission_quadrature(int k, double od, double t_int, double tau) {
  auto f = [&](double t) {
    const double alive = std::exp(-t / tau);
    return std::pow(alive * std::exp(-od) + (1.0 - alive), k);
  };
  return simpson(f, 0.0, t_int) / t_int;
}

}  // namespace rydtx::oracle
