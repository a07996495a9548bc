#pragma once

// Weighted least-squares estimation of the contrast optical depth and of
// the self-blockade transfer curve, with case-resampling bootstrap
// confidence intervals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "rydtx/dataset.hpp"
#include "rydtx/errors.hpp"
#include "rydtx/models.hpp"
#include "rydtx/rng.hpp"

namespace rydtx {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct ParamEstimate {
  std::string name;
  double value = 0.0;
  Interval ci_68{};
};

struct FitResult {
  std::vector<ParamEstimate> params;
  double sse = 0.0;
  std::size_t n_boot = 0;
  std::size_t n_boot_skipped = 0;
  bool converged = false;
  bool at_boundary = false;  ///< estimate sits on a search boundary
  bool ci_unbounded = false; ///< some interval is not identified by the data
  std::vector<std::string> warnings;

  const ParamEstimate& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw std::out_of_range("no fitted parameter named " + name);
  }

  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& p : params) v.push_back(p.value);
    return v;
  }
};

struct FitOptions {
  std::size_t n_boot = 1000;  ///< 0 disables the bootstrap
  std::uint64_t seed = 0x5EED;
};

/// Sum of ((y - model(x)) / sigma)^2.
template <typename Model>
double weighted_sse(const DataSet& data, Model&& model) {
  double s = 0.0;
  for (const auto& p : data.points) {
    const double r = (p.y - model(p.x)) / p.sigma;
    s += r * r;
  }
  return s;
}

// --- bootstrap ---------------------------------------------------------------

struct BootstrapResult {
  std::vector<Interval> intervals;
  std::size_t n_boot = 0;
  std::size_t skipped = 0;
};

/// Linear-interpolation (type 7) quantile of sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InsufficientDataError("quantile of empty sample");
  const double h = q * (sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

/// Case-resampling bootstrap with 16/84 percentile intervals. `fit` maps a
/// DataSet to its parameter vector. Resamples with fewer than `min_points`
/// distinct x values, or whose fit throws, are skipped; more than 10%
/// skipped is an error. Resample b draws from stream (seed, b).
template <typename Fit>
BootstrapResult bootstrap_ci(Fit&& fit, const DataSet& data, std::size_t n_boot, std::uint64_t seed,
                             std::size_t min_points = 2) {
  if (n_boot < 100) throw DomainError("bootstrap needs n_boot >= 100");
  if (data.points.empty()) throw InsufficientDataError("bootstrap of empty data set");
  const std::size_t n = data.points.size();
  std::vector<std::vector<double>> reps;
  BootstrapResult out;
  out.n_boot = n_boot;
  DataSet resample;
  resample.label = data.label;
  resample.points.resize(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    auto rng = make_stream(seed, b);
    std::set<double> distinct;
    for (auto& p : resample.points) {
      p = data.points[static_cast<std::size_t>(rng.uniform() * n)];
      distinct.insert(p.x);
    }
    if (distinct.size() < min_points) {
      ++out.skipped;
      continue;
    }
    try {
      reps.push_back(fit(resample));
    } catch (const std::runtime_error&) {
      ++out.skipped;
    } catch (const std::logic_error&) {
      ++out.skipped;
    }
  }
  if (out.skipped * 10 > n_boot)
    throw InsufficientDataError("bootstrap skipped " + std::to_string(out.skipped) + " of " +
                                std::to_string(n_boot) + " resamples");
  if (reps.empty()) throw InsufficientDataError("no usable bootstrap resamples");
  const std::size_t n_par = reps.front().size();
  for (std::size_t j = 0; j < n_par; ++j) {
    std::vector<double> col;
    col.reserve(reps.size());
    for (const auto& r : reps) col.push_back(r[j]);
    std::sort(col.begin(), col.end());
    out.intervals.push_back({sorted_quantile(col, 0.16), sorted_quantile(col, 0.84)});
  }
  return out;
}

/// Copies bootstrap intervals into the result, widened to contain the point
/// estimate.
inline void apply_intervals(FitResult& r, const BootstrapResult& b) {
  r.n_boot = b.n_boot;
  r.n_boot_skipped = b.skipped;
  for (std::size_t j = 0; j < r.params.size() && j < b.intervals.size(); ++j) {
    auto& p = r.params[j];
    p.ci_68 = {std::min(b.intervals[j].lo, p.value), std::max(b.intervals[j].hi, p.value)};
  }
}

// --- optical depth -----------------------------------------------------------

inline constexpr double kOdSearchMax = 50.0;
inline constexpr double kBoundaryTolerance = 1e-7;

struct OdEstimate {
  double od = 0.0;
  double sse = 0.0;
  bool at_boundary = false;
};

/// Weighted least-squares od for the capped-Poisson contrast curve. A coarse
/// grid locates the basin, then Brent's method (golden section with
/// parabolic steps) refines it to ~1e-12 relative.
inline OdEstimate estimate_od(const DataSet& data, int cap) {
  // The Poisson weights depend only on x; only the attenuation factors vary with od.
  std::vector<std::vector<double>> weights;
  for (const auto& p : data.points) weights.push_back(poisson::capped_weights(p.x, cap));
  auto sse = [&](double od) {
    std::vector<double> att(static_cast<std::size_t>(cap) + 1);
    for (int k = 1; k <= cap; ++k) att[k] = -std::expm1(-k * od);
    double s = 0.0;
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      double c = 0.0;
      for (int k = 1; k <= cap; ++k) c += weights[i][k] * att[k];
      const double r = (data.points[i].y - c) / data.points[i].sigma;
      s += r * r;
    }
    return s;
  };
  constexpr int kGrid = 400;
  // Grid denser near zero where physical values live.
  auto grid_x = [](int i) { return kOdSearchMax * std::pow(static_cast<double>(i) / kGrid, 2.0); };
  int best = 0;
  double best_val = sse(0.0);
  for (int i = 1; i <= kGrid; ++i) {
    const double v = sse(grid_x(i));
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double lo = grid_x(std::max(best - 1, 0));
  const double hi = grid_x(std::min(best + 1, kGrid));
  std::uintmax_t max_iter = 500;
  const std::uintmax_t budget = max_iter;
  auto [od, val] = boost::math::tools::brent_find_minima(sse, lo, hi, 40, max_iter);
  if (max_iter >= budget)
    throw ConvergenceError("od minimisation did not converge",
                           {"bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "]",
                            "iterations " + std::to_string(max_iter)});
  // Brent never evaluates the bracket endpoints exactly.
  if (sse(0.0) <= val) {
    od = 0.0;
    val = sse(0.0);
  }
  OdEstimate e{od, val, false};
  e.at_boundary = od <= kBoundaryTolerance || od >= kOdSearchMax - kBoundaryTolerance;
  return e;
}

/// Fit od_sp (incoming) or od_st (stored) to (mean photons, contrast, sigma) data.
inline FitResult fit_od(const DataSet& data, int cap, GateMode mode, const FitOptions& opts = {}) {
  detail::throw_if_violated(data.violations(1));
  if (cap < 1) throw DomainError("cap must be >= 1");
  for (const auto& p : data.points)
    if (!(p.y > -1.0 && p.y <= 1.0)) throw DomainError("contrast values must lie in (-1, 1]");

  const OdEstimate e = estimate_od(data, cap);
  FitResult r;
  r.params.push_back({mode == GateMode::incoming ? "od_sp" : "od_st", e.od, {e.od, e.od}});
  r.sse = e.sse;
  r.converged = true;
  r.at_boundary = e.at_boundary;
  if (e.at_boundary) {
    const bool all_zero = std::all_of(data.points.begin(), data.points.end(), [](const DataPoint& p) { return p.y == 0.0; });
    r.warnings.push_back(all_zero ? "all contrasts are zero; od at lower boundary" : "od estimate on search boundary");
  }
  if (opts.n_boot > 0) {
    auto refit = [cap](const DataSet& d) { return std::vector<double>{estimate_od(d, cap).od}; };
    apply_intervals(r, bootstrap_ci(refit, data, opts.n_boot, opts.seed, 2));
  }
  return r;
}

// --- saturation curve ----------------------------------------------------------

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Nelder-Mead simplex descent. Converges when every vertex lies within
/// `rel_tol` (relative, per coordinate) of the best one.
template <typename F>
SimplexResult nelder_mead(F&& f, std::vector<double> x0, double rel_tol = 1e-8, std::size_t max_iter = 20000) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> s(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += x0[i] != 0.0 ? 0.1 * x0[i] : 0.1;
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fs[i] = f(s[i]);

  std::vector<std::size_t> order(n + 1);
  SimplexResult r;
  auto point = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
    std::vector<double> p(n);
    for (std::size_t j = 0; j < n; ++j) p[j] = c[j] + t * (w[j] - c[j]);
    return p;
  };
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const auto& best = s[order[0]];
    double spread = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        spread = std::max(spread, std::abs(s[order[i]][j] - best[j]) / std::max(std::abs(best[j]), 1e-300));
    if (spread < rel_tol) {
      r.converged = true;
      break;
    }
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) c[j] += s[order[i]][j] / n;
    const std::size_t worst = order[n];
    const auto xr = point(c, s[worst], -1.0);
    const double fr = f(xr);
    if (fr < fs[order[0]]) {
      const auto xe = point(c, s[worst], -2.0);
      const double fe = f(xe);
      if (fe < fr) {
        s[worst] = xe;
        fs[worst] = fe;
      } else {
        s[worst] = xr;
        fs[worst] = fr;
      }
    } else if (fr < fs[order[n - 1]]) {
      s[worst] = xr;
      fs[worst] = fr;
    } else {
      const bool outside = fr < fs[worst];
      const auto xc = outside ? point(c, xr, 0.5) : point(c, s[worst], 0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fs[worst])) {
        s[worst] = xc;
        fs[worst] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          s[order[i]] = point(s[order[0]], s[order[i]], 0.5);
          fs[order[i]] = f(s[order[i]]);
        }
      }
    }
  }
  const auto it = std::min_element(fs.begin(), fs.end());
  r.x = s[static_cast<std::size_t>(it - fs.begin())];
  r.value = *it;
  return r;
}

struct SaturationEstimate {
  SaturationParams params{};
  double sse = 0.0;
  bool converged = false;
  bool degenerate = false;  ///< data do not reach the nonlinear regime
};

inline double median_x(const DataSet& data) {
  std::vector<double> xs;
  for (const auto& p : data.points) xs.push_back(p.x);
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

/// Simplex fit of (a, b), restarted from the incumbent until a restart no
/// longer improves the SSE. Lowest SSE wins; on an exact tie, smaller a.
inline SaturationEstimate estimate_saturation(const DataSet& data, int max_restarts = 8) {
  double max_x = 0.0, max_y = 0.0;
  for (const auto& p : data.points) {
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  auto objective = [&](const std::vector<double>& v) {
    if (!(v[0] >= 0.0) || !(v[1] > 0.0)) return std::numeric_limits<double>::max();
    return weighted_sse(data, [&](double x) { return v[0] * -std::expm1(-x / v[1]); });
  };
  std::vector<double> start{1.05 * max_y, median_x(data)};
  if (!(start[0] > 0.0)) start[0] = 1.0;
  if (!(start[1] > 0.0)) start[1] = max_x > 0.0 ? max_x : 1.0;

  SimplexResult best = nelder_mead(objective, start);
  for (int i = 0; i < max_restarts; ++i) {
    SimplexResult next = nelder_mead(objective, best.x);
    const bool better = next.value < best.value || (next.value == best.value && next.x[0] < best.x[0]);
    const bool improved = next.value < best.value * (1.0 - 1e-12) - 1e-300;
    if (better) best = next;
    if (!improved && best.converged) break;
  }
  SaturationEstimate e;
  e.params = {best.x[0], best.x[1]};
  e.sse = best.value;
  e.converged = best.converged;
  e.degenerate = !best.converged || e.params.b > 10.0 * max_x;
  return e;
}

/// Fit N_out = a (1 - exp(-N_in / b)) to (N_in, N_out, sigma) data.
inline FitResult fit_saturation(const DataSet& data, const FitOptions& opts = {}) {
  detail::throw_if_violated(data.violations(2));
  const SaturationEstimate e = estimate_saturation(data);
  FitResult r;
  r.params.push_back({"a", e.params.a, {e.params.a, e.params.a}});
  r.params.push_back({"b", e.params.b, {e.params.b, e.params.b}});
  r.sse = e.sse;
  r.converged = e.converged;
  if (e.degenerate) {
    r.warnings.push_back("ill-conditioned: data lie in the linear regime, only a/b is identified");
    r.ci_unbounded = true;
    r.at_boundary = true;
  } else if (!e.converged) {
    throw ConvergenceError("saturation fit did not converge",
                           {"a=" + std::to_string(e.params.a), "b=" + std::to_string(e.params.b),
                            "sse=" + std::to_string(e.sse)});
  }
  if (opts.n_boot > 0 && !e.degenerate) {
    auto refit = [](const DataSet& d) {
      const auto s = estimate_saturation(d);
      if (s.degenerate) throw ConvergenceError("degenerate resample", {});
      return std::vector<double>{s.params.a, s.params.b};
    };
    apply_intervals(r, bootstrap_ci(refit, data, opts.n_boot, opts.seed, 3));
  }
  if (r.ci_unbounded) r.params[1].ci_68 = {r.params[1].ci_68.lo, std::numeric_limits<double>::infinity()};
  return r;
}

// --- synthetic data --------------------------------------------------------------

inline DataSet synthetic_contrast_data(std::span<const double> xs, double od, int cap, double sigma = 1.0) {
  DataSet d;
  d.label = "synthetic-contrast";
  for (double x : xs) d.points.push_back({x, capped_poisson_contrast(x, od, cap), sigma});
  return d;
}

inline DataSet synthetic_transfer_data(std::span<const double> xs, const SaturationParams& sat, double sigma = 1.0) {
  DataSet d;
  d.label = "synthetic-transfer";
  for (double x : xs) d.points.push_back({x, transfer(x, sat), sigma});
  return d;
}

}  // namespace rydtx
