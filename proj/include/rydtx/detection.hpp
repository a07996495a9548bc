#pragma once

// Single-shot detection of stored gate excitations from source photon
// counts: Poisson mixture models of the count histogram, decomposition into
// gated/ungated parts, and the optimal discrimination threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "rydtx/errors.hpp"
#include "rydtx/histogram.hpp"
#include "rydtx/poisson.hpp"
#include "rydtx/rng.hpp"
#include "rydtx/sampling.hpp"

namespace rydtx {

struct MixtureComponent {
  double weight = 0.0;
  double mean = 0.0;  ///< Poisson mean of detected counts
};

/// Component k holds runs with k stored excitations (k = 0 ungated).
struct MixtureModel {
  std::vector<MixtureComponent> components;

  double ungated_weight() const { return components.empty() ? 0.0 : components.front().weight; }
  double gated_weight() const {
    double w = 0.0;
    for (std::size_t k = 1; k < components.size(); ++k) w += components[k].weight;
    return w;
  }

  /// Weight of component k within the gated sub-ensemble.
  double conditional_gated_weight(std::size_t k) const {
    const double g = gated_weight();
    if (k == 0 || k >= components.size() || g == 0.0) return 0.0;
    return components[k].weight / g;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (components.empty()) v.emplace_back("mixture has no components");
    double s = 0.0;
    for (const auto& c : components) {
      if (!(c.weight >= 0.0)) v.emplace_back("component weight must be >= 0");
      if (!(c.mean >= 0.0)) v.emplace_back("component mean must be >= 0");
      s += c.weight;
    }
    if (std::abs(s - 1.0) > 1e-12) v.emplace_back("component weights must sum to 1");
    return v;
  }

  void validate() const { detail::throw_if_violated(violations()); }
};

/// Gated weights from the Poisson statistics of stored excitations, capped
/// at `cap`; component means attenuated by e^{-k od_st}.
inline MixtureModel mixture_from_params(double n_stored, int cap, double od_st, double mu0) {
  detail::require_non_negative(n_stored, "n_stored");
  detail::require_non_negative(od_st, "od_st");
  if (!(mu0 > 0.0)) throw DomainError("mu0 must be positive");
  if (cap < 1) throw DomainError("cap must be >= 1");
  MixtureModel m;
  if (n_stored == 0.0) {
    m.components.push_back({1.0, mu0});
    return m;
  }
  const auto w = poisson::capped_weights(n_stored, cap);
  for (int k = 0; k <= cap; ++k) m.components.push_back({w[k], mu0 * std::exp(-k * od_st)});
  return m;
}

// --- decomposition -------------------------------------------------------------

struct DecompositionRow {
  std::int64_t events = 0;
  std::uint64_t observed = 0;
  double model_total = 0.0;
  double model_gated = 0.0;
  double model_ungated = 0.0;
  double residual = 0.0;  ///< observed - model_total
};

struct Decomposition {
  std::vector<DecompositionRow> rows;
  double chi2 = 0.0;  ///< Pearson statistic over bins merged to expected >= 5
  int dof = 0;
  double p_value = 1.0;

  double gated_mass() const {
    return std::accumulate(rows.begin(), rows.end(), 0.0, [](double s, const auto& r) { return s + r.model_gated; });
  }
  double ungated_mass() const {
    return std::accumulate(rows.begin(), rows.end(), 0.0, [](double s, const auto& r) { return s + r.model_ungated; });
  }
};

inline double brightest_mean(const MixtureModel& m) {
  double mu = 0.0;
  for (const auto& c : m.components) mu = std::max(mu, c.mean);
  return mu;
}

/// Pearson chi-square of observed against expected counts, merging
/// neighbouring bins left to right until each group expects >= min_expected.
inline void pearson_gof(Decomposition& d, double min_expected = 5.0) {
  std::vector<std::pair<double, double>> groups;  // (observed, expected)
  double o = 0.0, e = 0.0;
  for (const auto& r : d.rows) {
    o += static_cast<double>(r.observed);
    e += r.model_total;
    if (e >= min_expected) {
      groups.emplace_back(o, e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (groups.empty())
      groups.emplace_back(o, e);
    else {
      groups.back().first += o;
      groups.back().second += e;
    }
  }
  d.chi2 = 0.0;
  for (const auto& [obs, exp] : groups)
    if (exp > 0.0) d.chi2 += (obs - exp) * (obs - exp) / exp;
  d.dof = static_cast<int>(groups.size()) - 1;
  if (d.dof < 1) {
    d.p_value = 1.0;
    return;
  }
  boost::math::chi_squared_distribution<double> chi(d.dof);
  d.p_value = boost::math::cdf(boost::math::complement(chi, d.chi2));
}

/// Expected per-bin run counts of the ungated (k = 0) and gated (k >= 1)
/// parts of the model, scaled to the observed number of runs. Bins extend
/// until the model tail is negligible.
inline Decomposition decompose(const CountHistogram& observed, const MixtureModel& model) {
  model.validate();
  if (observed.total() == 0) throw InsufficientDataError("cannot decompose an empty histogram");
  const double total = static_cast<double>(observed.total());
  const std::int64_t last =
      std::max(observed.max_events(), poisson::upper_quantile(1e-16, brightest_mean(model)));
  Decomposition d;
  d.rows.reserve(static_cast<std::size_t>(last) + 1);
  for (std::int64_t n = 0; n <= last; ++n) {
    DecompositionRow r;
    r.events = n;
    r.observed = observed.count(n);
    const auto& c0 = model.components.front();
    r.model_ungated = total * c0.weight * poisson::pmf(n, c0.mean);
    for (std::size_t k = 1; k < model.components.size(); ++k) {
      const auto& c = model.components[k];
      r.model_gated += total * c.weight * poisson::pmf(n, c.mean);
    }
    r.model_total = r.model_gated + r.model_ungated;
    r.residual = static_cast<double>(r.observed) - r.model_total;
    d.rows.push_back(r);
  }
  pearson_gof(d);
  return d;
}

// --- threshold -------------------------------------------------------------------

struct ThresholdResult {
  std::int64_t tau = 0;  ///< declare "present" iff counts <= tau; -1 never declares
  double fidelity = 0.0;
  double p_detect_given_gated = 0.0;
  double p_reject_given_ungated = 0.0;
  double balanced_accuracy = 0.0;
  std::int64_t scan_max = 0;       ///< thresholds 0..scan_max were scanned
  bool non_discriminating = false; ///< all components share one mean
  bool below_prior = false;        ///< worse than always guessing the likelier class
};

/// Prior-weighted single-shot success probability at threshold tau.
inline ThresholdResult threshold_fidelity(const MixtureModel& model, std::int64_t tau) {
  const double w0 = model.ungated_weight();
  const double wg = model.gated_weight();
  double detect = 0.0;
  for (std::size_t k = 1; k < model.components.size(); ++k)
    detect += model.components[k].weight * poisson::cdf(tau, model.components[k].mean);
  ThresholdResult r;
  r.tau = tau;
  r.p_detect_given_gated = wg > 0.0 ? detect / wg : 0.0;
  r.p_reject_given_ungated = poisson::sf(tau, model.components.front().mean);
  r.fidelity = detect + w0 * r.p_reject_given_ungated;
  r.balanced_accuracy = 0.5 * (r.p_detect_given_gated + r.p_reject_given_ungated);
  r.below_prior = r.fidelity < std::max(w0, wg);
  return r;
}

/// Upper end of the threshold scan: the 0.9999 quantile of the brightest component.
inline std::int64_t threshold_scan_limit(const MixtureModel& model) {
  return poisson::quantile(0.9999, brightest_mean(model));
}

/// Threshold maximising prior-weighted fidelity; ties go to the smaller tau.
inline ThresholdResult optimal_threshold(const MixtureModel& model) {
  model.validate();
  const double w0 = model.ungated_weight();
  const double wg = model.gated_weight();
  if (!(wg > 0.0)) throw DomainError("model needs a gated component with positive weight");
  const std::int64_t limit = threshold_scan_limit(model);

  const double mu0 = model.components.front().mean;
  bool all_equal = true;
  for (const auto& c : model.components)
    if (c.weight > 0.0 && std::abs(c.mean - mu0) > 1e-12 * std::max(mu0, 1.0)) all_equal = false;
  if (all_equal) {
    ThresholdResult r = wg >= w0 ? threshold_fidelity(model, limit) : ThresholdResult{};
    if (wg < w0) {
      r.tau = -1;
      r.p_reject_given_ungated = 1.0;
    }
    r.fidelity = std::max(w0, wg);
    r.balanced_accuracy = 0.5;
    r.non_discriminating = true;
    r.below_prior = false;
    r.scan_max = limit;
    return r;
  }

  ThresholdResult best = threshold_fidelity(model, 0);
  for (std::int64_t tau = 1; tau <= limit; ++tau) {
    const ThresholdResult r = threshold_fidelity(model, tau);
    if (r.fidelity > best.fidelity) best = r;
  }
  best.scan_max = limit;
  return best;
}

// --- dispersion test ---------------------------------------------------------------

struct PoissonnessResult {
  double index_of_dispersion = 0.0;  ///< sample variance / mean
  double p_value = 0.0;              ///< two-sided, Monte Carlo null
  bool pass = false;                 ///< p >= alpha
};

struct PoissonnessOptions {
  std::size_t n_null = 999;
  std::uint64_t seed = 0xD15FE25ULL;
  double alpha = 0.05;
};

inline constexpr std::uint64_t kMinPoissonnessRuns = 30;

/// Index-of-dispersion test against a Poisson law with the observed mean.
/// The null distribution is sampled with the same number of runs.
inline PoissonnessResult poissonness_test(const CountHistogram& hist, const PoissonnessOptions& opts = {}) {
  if (hist.total() < kMinPoissonnessRuns)
    throw InsufficientDataError("dispersion test needs at least 30 runs");
  PoissonnessResult r;
  const double mean = hist.mean();
  if (mean == 0.0) return r;
  r.index_of_dispersion = hist.variance() / mean;

  const std::size_t n = hist.total();
  std::size_t le = 0, ge = 0;
  for (std::size_t s = 0; s < opts.n_null; ++s) {
    auto rng = make_stream(opts.seed, s);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(sample_poisson(mean, rng));
      sum += x;
      sum2 += x * x;
    }
    const double m = sum / n;
    const double d = m > 0.0 ? (sum2 - n * m * m) / (n - 1) / m : 1.0;
    if (d <= r.index_of_dispersion) ++le;
    if (d >= r.index_of_dispersion) ++ge;
  }
  const double denom = static_cast<double>(opts.n_null + 1);
  r.p_value = std::min(1.0, 2.0 * std::min((le + 1) / denom, (ge + 1) / denom));
  r.pass = r.p_value >= opts.alpha;
  return r;
}

}  // namespace rydtx
