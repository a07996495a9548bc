#pragma once

// Closed-form transistor models: switch contrast, gate storage, the
// blockade-capped Poisson contrast curves, gain and the self-blockade
// transfer function of the source beam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "rydtx/errors.hpp"
#include "rydtx/poisson.hpp"

namespace rydtx {

/// Physical model constants. Defaults are the 30 us dataset values.
struct TransistorParams {
  double od_sp = 0.75;   ///< optical depth per incoming gate photon
  double od_st = 2.2;    ///< optical depth per stored gate excitation
  int cap = 3;           ///< blockade capacity (max simultaneous gate excitations)
  double a_ge = 0.15;    ///< intermediate-state absorption of gate photons
  double eta_det = 0.31; ///< overall photon detection efficiency

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(od_sp >= 0.0)) v.emplace_back("od_sp must be >= 0");
    if (!(od_st >= 0.0)) v.emplace_back("od_st must be >= 0");
    if (cap < 1) v.emplace_back("cap must be >= 1");
    if (!(a_ge >= 0.0 && a_ge < 1.0)) v.emplace_back("a_ge must lie in [0, 1)");
    if (!(eta_det > 0.0 && eta_det <= 1.0)) v.emplace_back("eta_det must lie in (0, 1]");
    return v;
  }

  /// Non-fatal oddities. od_sp > od_st is legal but unusual.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (od_sp > od_st) w.emplace_back("od_sp exceeds od_st");
    return w;
  }

  void validate() const { detail::throw_if_violated(violations()); }
};

/// Self-blockade transfer curve a (1 - exp(-N/b)).
struct SaturationParams {
  double a = 46.0;
  double b = 70.0;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(a >= 0.0)) v.emplace_back("saturation a must be >= 0");
    if (!(b > 0.0)) v.emplace_back("saturation b must be > 0");
    return v;
  }

  void validate() const { detail::throw_if_violated(violations()); }
};

struct PhotonCounts {
  double mean_in = 0.0;
  double mean_out = 0.0;

  /// mean_out > mean_in is only tolerated when flagged as a measurement artifact.
  void validate(bool allow_artifact = false) const {
    detail::require_non_negative(mean_in, "mean_in");
    detail::require_non_negative(mean_out, "mean_out");
    if (mean_out > mean_in && !allow_artifact)
      throw InconsistentMeasurementError("mean_out exceeds mean_in");
  }
};

enum class GateMode { incoming, stored };

inline const char* to_string(GateMode m) { return m == GateMode::incoming ? "incoming" : "stored"; }

inline constexpr double kStoredClampTolerance = 1e-9;

/// 1 - with_gate / no_gate.
inline double switch_contrast(double with_gate, double no_gate) {
  detail::require_non_negative(with_gate, "with_gate");
  detail::require_non_negative(no_gate, "no_gate");
  if (no_gate == 0.0) throw UndefinedContrastError("switch contrast undefined for zero no-gate transmission");
  if (with_gate == no_gate) return 0.0;
  return 1.0 - with_gate / no_gate;
}

/// Mean stored gate excitations from input/output gate photon means.
inline double stored_mean(double n_in, double n_out, double a_ge) {
  detail::require_non_negative(n_in, "n_in");
  detail::require_non_negative(n_out, "n_out");
  if (!(a_ge >= 0.0 && a_ge < 1.0)) throw DomainError("a_ge must lie in [0, 1)");
  const double stored = (1.0 - a_ge) * n_in - n_out;
  if (stored < -kStoredClampTolerance)
    throw InconsistentMeasurementError("transmitted gate photons exceed the non-absorbed input");
  return stored < 0.0 ? 0.0 : stored;
}

/// Contrast of a perfect switch driven by a coherent gate: the zero-photon
/// probability is the only failure.
inline double coherent_limit(double n_gate) {
  detail::require_non_negative(n_gate, "n_gate");
  return -std::expm1(-n_gate);
}

inline double fock_contrast(std::int64_t k, double od, int cap) {
  if (k < 0) throw DomainError("photon number must be non-negative");
  detail::require_non_negative(od, "od");
  if (cap < 1) throw DomainError("cap must be >= 1");
  const auto blocked = std::min<std::int64_t>(k, cap);
  return -std::expm1(-static_cast<double>(blocked) * od);
}

/// 1 - sum_k Poisson(mean; k) exp(-min(k, cap) od), summed exactly: the
/// terms k >= cap share one attenuation and collapse into the Poisson tail.
inline double capped_poisson_contrast(double mean, double od, int cap) {
  detail::require_non_negative(mean, "mean");
  detail::require_non_negative(od, "od");
  if (cap < 1) throw DomainError("cap must be >= 1");
  if (mean == 0.0) return 0.0;
  double c = 0.0;
  for (int k = 1; k < cap; ++k) c += poisson::pmf(k, mean) * -std::expm1(-k * od);
  const double tail = boost::math::gamma_p(static_cast<double>(cap), mean);
  c += tail * -std::expm1(-cap * od);
  return c;
}

inline double expected_contrast_incoming(double n_gate, double od_sp, int cap = 3) {
  return capped_poisson_contrast(n_gate, od_sp, cap);
}

inline double expected_contrast_stored(double n_stored, double od_st, int cap = 3) {
  return capped_poisson_contrast(n_stored, od_st, cap);
}

inline double expected_contrast(GateMode mode, double n, const TransistorParams& p) {
  return mode == GateMode::incoming ? expected_contrast_incoming(n, p.od_sp, p.cap)
                                    : expected_contrast_stored(n, p.od_st, p.cap);
}

/// Optical depth at which the capped-Poisson contrast at `mean` equals
/// `target`. Requires 0 <= target < 1 - P(N = 0).
inline double od_for_contrast(double target, double mean, int cap = 3) {
  detail::require_non_negative(mean, "mean");
  const double ceiling = coherent_limit(mean);
  if (!(target >= 0.0 && target < ceiling))
    throw DomainError("target contrast must lie in [0, 1 - exp(-mean))");
  if (target == 0.0) return 0.0;
  double hi = 1.0;
  while (capped_poisson_contrast(mean, hi, cap) < target) hi *= 2.0;
  auto f = [&](double od) { return capped_poisson_contrast(mean, od, cap) - target; };
  std::uintmax_t iters = 200;
  auto [lo_r, hi_r] = boost::math::tools::toms748_solve(
      f, 0.0, hi, f(0.0), f(hi), boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (lo_r + hi_r);
}

inline double transfer(double n_source_in, const SaturationParams& sat) {
  detail::require_non_negative(n_source_in, "n_source_in");
  sat.validate();
  return sat.a * -std::expm1(-n_source_in / sat.b);
}

/// Source photons removed by the gate.
inline double gain(double no_gate_out, double with_gate_out) {
  detail::require_non_negative(no_gate_out, "no_gate_out");
  detail::require_non_negative(with_gate_out, "with_gate_out");
  return no_gate_out - with_gate_out;
}

/// Gain predicted by combining the contrast model with the transfer curve.
/// The with-gate curve is (1 - C) transfer(N), so the gain is C transfer(N).
inline double predicted_gain(double n_gate, GateMode mode, const TransistorParams& params,
                             const SaturationParams& sat, double n_source_in) {
  params.validate();
  const double c = expected_contrast(mode, n_gate, params);
  const double no_gate = transfer(n_source_in, sat);
  return gain(no_gate, (1.0 - c) * no_gate);
}

struct CapacityEstimate {
  int raw = 1;      ///< hard-rod count floor(4 sigma_l / r_b) + 1
  int applied = 1;  ///< raw clamped to the configured capacity
};

/// Hard-rod heuristic: rods of length r_b packed along the +-2 sigma extent
/// of the cloud. Not used implicitly by any model.
inline CapacityEstimate blockade_capacity(double cloud_length_sigma, double blockade_radius,
                                          int configured_cap = 3) {
  if (!(cloud_length_sigma > 0.0) || !(blockade_radius > 0.0))
    throw DomainError("cloud length and blockade radius must be positive");
  if (configured_cap < 1) throw DomainError("configured cap must be >= 1");
  const double rods = std::floor(4.0 * cloud_length_sigma / blockade_radius);
  CapacityEstimate est;
  est.raw = rods >= static_cast<double>(std::numeric_limits<int>::max() - 1)
                ? std::numeric_limits<int>::max()
                : static_cast<int>(rods) + 1;
  est.applied = std::min(est.raw, configured_cap);
  return est;
}

}  // namespace rydtx
