#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "rydtx/montecarlo.hpp"

using namespace rydtx;

namespace {

/// Ideal detector, no self-blockade, no fly-away: stored mean = n_gate_in.
SimConfig ideal_config(double n_stored, double od_st) {
  SimConfig c;
  c.params = TransistorParams{0.75, od_st, 3, 0.0, 1.0};
  c.p_store = 1.0;
  c.n_gate_in = n_stored;
  c.source_rate = 0.69;
  c.t_int = 30.0;
  c.seed = 1234;
  return c;
}

struct Moments {
  double mean = 0.0;
  double sem = 0.0;
};

template <typename F>
Moments moments(const std::vector<RunOutcome>& runs, F&& field) {
  double s = 0.0, s2 = 0.0;
  for (const auto& r : runs) {
    const double x = static_cast<double>(field(r));
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(runs.size());
  const double m = s / n;
  return {m, std::sqrt((s2 / n - m * m) / (n - 1))};
}

std::vector<RunOutcome> forced_runs(const SimConfig& cfg, int k, std::size_t n) {
  std::vector<RunOutcome> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = make_stream(cfg.seed, i);
    out[i] = simulate_source_window(cfg, k, rng);
  }
  return out;
}

}  // namespace

TEST(DrawStored, ZeroInput) {
  auto rng = make_stream(1, 0);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(draw_stored(0.0, 0.15, 1.0, 3, rng), 0);
}

TEST(DrawStored, CappedExpectationMatchesSeries) {
  // Exact E[min(N, 3)], N ~ Poisson(1.04 * 0.85): 0.868789693251806923.
  const double exact = 0.868789693251806923;
  EXPECT_NEAR(oracle::capped_mean(1.04 * 0.85, 3), exact, 1e-14);
  EXPECT_NEAR(capped_storage_mean(1.04 * 0.85, 3), exact, 1e-14);
  EXPECT_LT(exact, 1.04 * 0.85);

  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto rng = make_stream(99, static_cast<std::uint64_t>(i));
    const int k = draw_stored(1.04, 0.15, 1.0, 3, rng);
    ASSERT_LE(k, 3);
    s += k;
    s2 += k * k;
  }
  const double m = s / n;
  const double sem = std::sqrt((s2 / n - m * m) / (n - 1));
  EXPECT_NEAR(m, exact, 3 * sem);
}

TEST(DrawStored, FullBlockade) {
  auto rng = make_stream(2, 0);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(draw_stored(50.0, 0.15, 1.0, 1, rng), 1);
}

TEST(DrawGate, PhotonBookkeeping) {
  auto rng = make_stream(3, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto g = draw_gate(2.0, 0.15, 0.7, 3, rng);
    ASSERT_LE(g.stored + g.transmitted, g.incoming);
    ASSERT_LE(g.stored, 3);
  }
}

TEST(SimulateRun, PoissonSourceWithoutGate) {
  SimConfig cfg = ideal_config(0.0, 0.94);
  const auto runs = forced_runs(cfg, 0, 100000);
  const auto m = moments(runs, [](const RunOutcome& r) { return r.source_detected; });
  EXPECT_NEAR(m.mean, 20.7, 3 * m.sem);
  // Poisson: variance equals the mean.
  const double var = m.sem * m.sem * (runs.size() - 1);
  EXPECT_NEAR(var / m.mean, 1.0, 0.03);
}

TEST(SimulateRun, SingleExcitationThinning) {
  SimConfig cfg = ideal_config(0.0, 0.94);
  const auto runs = forced_runs(cfg, 1, 100000);
  const auto m = moments(runs, [](const RunOutcome& r) { return r.source_detected; });
  EXPECT_NEAR(m.mean, 20.7 * std::exp(-0.94), 3 * m.sem);
}

TEST(SimulateRun, InvariantsAndZeroSource) {
  SimConfig cfg = calibrated_90us_config();
  cfg.seed = 5;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    auto rng = make_stream(cfg.seed, i);
    const auto r = simulate_run(cfg, rng);
    ASSERT_LE(r.source_detected, r.source_transmitted);
    ASSERT_LE(r.gate_detected, r.gate_transmitted);
    ASSERT_LE(r.k_stored, cfg.params.cap);
  }
  cfg.source_rate = 0.0;
  auto rng = make_stream(1, 1);
  const auto r = simulate_run(cfg, rng);
  EXPECT_EQ(r.source_transmitted, 0);
  EXPECT_EQ(r.source_detected, 0);
}

TEST(SimulateRun, NoInteractionMeansNoContrast) {
  SimConfig gated = ideal_config(1.5, 0.0);
  SimConfig ungated = gated;
  ungated.n_gate_in = 0.0;
  ungated.seed = 777;
  const auto g = simulate_runs(gated, 100000);
  const auto u = simulate_runs(ungated, 100000);
  const auto mg = moments(g, [](const RunOutcome& r) { return r.source_detected; });
  const auto mu = moments(u, [](const RunOutcome& r) { return r.source_detected; });
  EXPECT_LT(std::abs(mg.mean - mu.mean), 3 * std::hypot(mg.sem, mu.sem));
}

TEST(SimulateRun, StoredMeanIdentityHoldsOnSimulatedData) {
  // Excess and unstored photons leave the medium, so
  // (1 - a_ge) n_in - <transmitted> = <stored>.
  SimConfig cfg = calibrated_30us_config();
  cfg.n_gate_in = 2.5;
  cfg.seed = 17;
  const auto runs = simulate_runs(cfg, 100000);
  const auto trans = moments(runs, [](const RunOutcome& r) { return r.gate_transmitted; });
  const auto stored = moments(runs, [](const RunOutcome& r) { return r.k_stored; });
  const double estimate = (1.0 - cfg.params.a_ge) * cfg.n_gate_in - trans.mean;
  EXPECT_NEAR(estimate, stored.mean, 3 * std::hypot(trans.sem, stored.sem) + 0.01);
  const auto det = moments(runs, [](const RunOutcome& r) { return r.gate_detected; });
  EXPECT_NEAR(det.mean, cfg.params.eta_det * trans.mean, 4 * det.sem);
}

TEST(Ensemble, SingleRunAndDeterminism) {
  SimConfig cfg = calibrated_90us_config();
  cfg.seed = 42;
  const auto one = simulate_ensemble(cfg, 1);
  EXPECT_EQ(one.n_runs, 1u);
  EXPECT_EQ(one.histogram.total(), 1u);

  const auto a = simulate_ensemble(cfg, 5000, 1);
  const auto b = simulate_ensemble(cfg, 5000, 1);
  const auto c = simulate_ensemble(cfg, 5000, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_EQ(a.histogram.total(), a.n_runs);
  EXPECT_EQ(simulate_runs(cfg, 3000, 1), simulate_runs(cfg, 3000, 0));

  cfg.seed = 43;
  EXPECT_NE(simulate_ensemble(cfg, 5000), a);
}

TEST(Ensemble, MeansAreRunAggregates) {
  SimConfig cfg = calibrated_30us_config();
  cfg.seed = 8;
  const auto runs = simulate_runs(cfg, 2000);
  const auto e = summarize(runs);
  double s = 0.0;
  for (const auto& r : runs) s += static_cast<double>(r.source_detected);
  EXPECT_DOUBLE_EQ(e.mean_source_detected, s / runs.size());
  EXPECT_DOUBLE_EQ(e.histogram.mean(), e.mean_source_detected);
}

TEST(Ensemble, ContrastMatchesCappedMixture) {
  for (auto [od, n] : {std::pair{0.94, 0.61}, std::pair{2.2, 1.0}, std::pair{0.5, 3.0}}) {
    SimConfig gated = ideal_config(n, od);
    SimConfig ref = gated;
    ref.n_gate_in = 0.0;
    ref.seed = 4321;
    const auto g = simulate_runs(gated, 100000);
    const auto r = simulate_runs(ref, 100000);
    const auto mg = moments(g, [](const RunOutcome& o) { return o.source_detected; });
    const auto mr = moments(r, [](const RunOutcome& o) { return o.source_detected; });
    const double c = 1.0 - mg.mean / mr.mean;
    const double se = (mg.mean / mr.mean) * std::hypot(mg.sem / mg.mean, mr.sem / mr.mean);
    EXPECT_NEAR(c, oracle::truncated_contrast(n, od, 3), 3 * se) << "od=" << od << " n=" << n;
  }
}

TEST(Ensemble, SelfBlockadeFollowsTransferCurve) {
  SimConfig cfg = ideal_config(0.0, 0.94);
  cfg.params.eta_det = 0.31;
  cfg.sat = SaturationParams{46.0, 70.0};
  cfg.t_int = 90.0;
  for (double n_in : {10.0, 70.0, 250.0}) {
    cfg.source_rate = n_in / cfg.t_int;
    const auto runs = simulate_runs(cfg, 20000);
    const auto m = moments(runs, [](const RunOutcome& r) { return r.source_detected; });
    EXPECT_NEAR(m.mean / cfg.params.eta_det, transfer(n_in, *cfg.sat), 3 * m.sem / cfg.params.eta_det);
  }
}

TEST(Ensemble, LargerOdStochasticallyDecreasesCounts) {
  SimConfig lo = ideal_config(1.0, 0.5), hi = ideal_config(1.0, 1.5);
  hi.seed = 99;
  const auto a = summarize(simulate_runs(lo, 100000));
  const auto b = summarize(simulate_runs(hi, 100000));
  const auto max_n = std::max(a.histogram.max_events(), b.histogram.max_events());
  double ca = 0.0, cb = 0.0;
  const double tol = 3.0 * std::sqrt(0.25 / 100000) * std::sqrt(2.0);
  for (std::int64_t x = 0; x <= max_n; ++x) {
    ca += static_cast<double>(a.histogram.count(x)) / a.n_runs;
    cb += static_cast<double>(b.histogram.count(x)) / b.n_runs;
    ASSERT_GE(cb, ca - tol) << "x=" << x;
  }
  EXPECT_LT(b.mean_source_detected, a.mean_source_detected);
}

TEST(Ensemble, FasterFlyAwayIncreasesGatedTransmission) {
  SimConfig slow = ideal_config(1.0, 2.2);
  slow.t_int = 90.0;
  slow.retention_tau = 111.0;
  SimConfig fast = slow;
  fast.retention_tau = 55.5;
  const auto a = summarize(simulate_runs(slow, 50000));
  const auto b = summarize(simulate_runs(fast, 50000));
  EXPECT_GT(b.mean_source_transmitted, a.mean_source_transmitted);
}

TEST(FlyAway, WindowTransmissionMatchesQuadrature) {
  for (int k : {0, 1, 2, 3})
    for (double tau : {10.0, 44.0, 111.0, 1000.0})
      EXPECT_NEAR(window_transmission(k, 2.2, 90.0, tau), oracle::window_transmission_quadrature(k, 2.2, 90.0, tau),
                  1e-10)
          << "k=" << k << " tau=" << tau;
  EXPECT_DOUBLE_EQ(window_transmission(2, 0.94, 90.0, kInfiniteRetention), std::exp(-1.88));
}

TEST(FlyAway, CalibrationReproducesWindowOd) {
  const double tau = calibrate_retention_tau(2.2, 0.94, 90.0);
  EXPECT_NEAR(tau, 111.086, 0.01);
  EXPECT_NEAR(effective_od(2.2, 90.0, tau), 0.94, 1e-10);
  EXPECT_NEAR(-std::log(oracle::window_transmission_quadrature(1, 2.2, 90.0, tau)), 0.94, 1e-8);

  const double tau_exp = calibrate_retention_tau(2.2, 0.94, 90.0, FlyAwayMatch::exponent);
  EXPECT_NEAR(2.2 * mean_alive_fraction(90.0, tau_exp), 0.94, 1e-10);
  EXPECT_LT(tau_exp, tau);
  EXPECT_TRUE(std::isinf(calibrate_retention_tau(2.2, 2.2, 90.0)));
  EXPECT_THROW(calibrate_retention_tau(0.94, 2.2, 90.0), DomainError);
}

TEST(FlyAway, SimulatedSingleExcitationMatchesWindowAverage) {
  SimConfig cfg = ideal_config(0.0, 2.2);
  cfg.t_int = 90.0;
  cfg.retention_tau = calibrate_retention_tau(2.2, 0.94, 90.0);
  const auto runs = forced_runs(cfg, 1, 100000);
  const auto m = moments(runs, [](const RunOutcome& r) { return r.source_detected; });
  EXPECT_NEAR(m.mean / (0.69 * 90.0), std::exp(-0.94), 3 * m.sem / (0.69 * 90.0));
}

TEST(CalibratedConfigs, StorageCalibration) {
  const auto c30 = calibrated_30us_config();
  EXPECT_NEAR(c30.p_store, 0.698097, 1e-6);
  // The stored route reproduces the Fock contrast of a single incoming photon.
  EXPECT_NEAR((1.0 - c30.params.a_ge) * c30.p_store * fock_contrast(1, 2.2, 3), fock_contrast(1, 0.75, 3), 1e-14);
  const auto c90 = calibrated_90us_config();
  EXPECT_NEAR((1.0 - c90.params.a_ge) * c90.p_store, 0.5947, 1e-4);
  EXPECT_NEAR(effective_od(c90.params.od_st, c90.t_int, c90.retention_tau), 0.94, 1e-10);
  EXPECT_NEAR(c90.self_blockade_factor(), transfer(0.69 * 90.0, {46.0, 70.0}) / (0.69 * 90.0), 1e-15);

  const double p = store_probability_for_mean(0.61, 0.75, 0.15, 3);
  EXPECT_NEAR(capped_storage_mean(0.75 * 0.85 * p, 3), 0.61, 1e-12);
  EXPECT_NEAR(p, 0.963, 1e-3);
}

TEST(SimConfig, Validation) {
  SimConfig c;
  EXPECT_TRUE(c.violations().empty());
  c.t_int = 0.0;
  c.p_store = 1.5;
  c.retention_tau = 0.0;
  c.source_rate = -1.0;
  EXPECT_EQ(c.violations().size(), 4u);
  EXPECT_THROW(simulate_runs(c, 10), ValidationError);

  SimConfig s;
  s.sat = SaturationParams{100.0, 10.0};
  EXPECT_FALSE(s.violations().empty());
  EXPECT_THROW(simulate_runs(SimConfig{}, 0), DomainError);
}

TEST(ContrastScan, ZeroOdGivesZeroContrast) {
  SimConfig cfg = ideal_config(0.0, 0.0);
  const std::vector<double> ns{0.5, 1.0, 2.0};
  const auto ds = contrast_scan(cfg, ns, 20000);
  ASSERT_EQ(ds.size(), 3u);
  for (const auto& p : ds.points) {
    EXPECT_GT(p.sigma, 0.0);
    EXPECT_LT(std::abs(p.y), 3.5 * p.sigma);
  }
}

TEST(ContrastScan, FollowsIncomingModel) {
  // Every incoming photon stored: the simulated curve is the incoming model.
  SimConfig cfg = ideal_config(0.0, 0.75);
  const std::vector<double> ns{0.25, 1.04, 2.0, 3.5};
  const auto ds = contrast_scan(cfg, ns, 50000);
  for (const auto& p : ds.points) EXPECT_NEAR(p.y, oracle::truncated_contrast(p.x, 0.75, 3), 3 * p.sigma) << p.x;
}

TEST(ContrastScan, MeasuredPointCompatible) {
  SimConfig cfg = calibrated_30us_config();
  cfg.seed = 2024;
  const std::vector<double> ns{1.04};
  const auto ds = contrast_scan(cfg, ns, 50000);
  EXPECT_LE(std::abs(ds.points[0].y - 0.39), 0.04 + 3 * ds.points[0].sigma);
  EXPECT_NEAR(ds.points[0].y, expected_window_contrast([&] {
                auto c = cfg;
                c.n_gate_in = 1.04;
                return c;
              }()),
              3 * ds.points[0].sigma);
}

TEST(ContrastScan, ZeroReferenceIsAnError) {
  SimConfig cfg = ideal_config(0.0, 1.0);
  cfg.source_rate = 0.0;
  const std::vector<double> ns{1.0};
  EXPECT_THROW(contrast_scan(cfg, ns, 100), UndefinedContrastError);
}

TEST(TransferScan, GatedCurveIsScaledUngatedCurve) {
  SimConfig cfg = calibrated_90us_config();
  cfg.seed = 3;
  const std::vector<double> ns{20.0, 120.0};
  const auto pts = transfer_scan(cfg, ns, 4000);
  const double c = expected_window_contrast(cfg);
  for (const auto& p : pts) {
    EXPECT_NEAR(p.no_gate, transfer(p.n_source_in, *cfg.sat), 3 * p.no_gate_sigma);
    EXPECT_NEAR(p.with_gate, (1.0 - c) * transfer(p.n_source_in, *cfg.sat), 3 * p.with_gate_sigma);
  }
}
