#include <gtest/gtest.h>

#include <boost/random/normal_distribution.hpp>
#include <algorithm>
#include <cmath>
#include <vector>

#include "rydtx/fitting.hpp"
#include "rydtx/montecarlo.hpp"

using namespace rydtx;

namespace {

std::vector<double> fig2_grid() {
  std::vector<double> xs;
  for (int i = 1; i <= 14; ++i) xs.push_back(0.25 * i);
  return xs;
}

std::vector<double> transfer_grid() {
  std::vector<double> xs;
  for (int i = 1; i <= 10; ++i) xs.push_back(25.0 * i);
  return xs;
}

// Adds N(0, sigma_i) noise to y using stream (seed, trial).
DataSet add_noise(DataSet d, std::uint64_t seed, std::uint64_t trial) {
  auto rng = make_stream(seed, trial);
  boost::random::normal_distribution<double> g;
  for (auto& p : d.points) p.y += p.sigma * g(rng);
  return d;
}

FitOptions no_boot() {
  FitOptions o;
  o.n_boot = 0;
  return o;
}

}  // namespace

TEST(FitOd, ZeroNoiseRoundTrip) {
  const auto xs = fig2_grid();
  for (double od : {0.45, 0.75, 0.94, 2.2}) {
    for (auto mode : {GateMode::incoming, GateMode::stored}) {
      const auto r = fit_od(synthetic_contrast_data(xs, od, 3), 3, mode, no_boot());
      EXPECT_NEAR(r.params[0].value, od, 1e-6) << od;
      EXPECT_EQ(r.params[0].name, mode == GateMode::incoming ? "od_sp" : "od_st");
      EXPECT_FALSE(r.at_boundary);
      EXPECT_LT(r.sse, 1e-12);
    }
  }
}

TEST(FitOd, RandomParameterRoundTrip) {
  auto rng = make_stream(11, 0);
  for (int i = 0; i < 100; ++i) {
    const double od = 0.05 + 4.95 * rng.uniform();
    const int cap = 1 + static_cast<int>(rng.uniform() * 5);
    std::vector<double> xs;
    for (int j = 0; j < 6; ++j) xs.push_back(0.1 + 4.0 * rng.uniform());
    const auto r = fit_od(synthetic_contrast_data(xs, od, cap), cap, GateMode::incoming, no_boot());
    EXPECT_NEAR(r.params[0].value, od, 1e-6) << "od=" << od << " cap=" << cap;
  }
}

TEST(FitOd, ZeroOdIsBoundary) {
  const auto r = fit_od(synthetic_contrast_data(fig2_grid(), 0.0, 3), 3, GateMode::incoming, no_boot());
  EXPECT_EQ(r.params[0].value, 0.0);
  EXPECT_TRUE(r.at_boundary);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("zero"), std::string::npos);
}

TEST(FitOd, RejectsBadInput) {
  DataSet d = synthetic_contrast_data(fig2_grid(), 0.75, 3);
  EXPECT_THROW(fit_od(d, 0, GateMode::incoming), DomainError);
  auto bad = d;
  bad.points[0].y = 1.5;
  EXPECT_THROW(fit_od(bad, 3, GateMode::incoming), DomainError);
  bad = d;
  bad.points[0].sigma = 0.0;
  EXPECT_THROW(fit_od(bad, 3, GateMode::incoming), ValidationError);
  bad.points.resize(1);
  bad.points[0].sigma = 1.0;
  EXPECT_THROW(fit_od(bad, 3, GateMode::incoming), ValidationError);
  bad = d;
  bad.points[2].x = -0.1;
  EXPECT_THROW(fit_od(bad, 3, GateMode::incoming), ValidationError);
}

TEST(FitOd, NoisyIntervalComparableToMeasurement) {
  const auto truth = synthetic_contrast_data(fig2_grid(), 0.75, 3, 0.04);
  const auto r = fit_od(add_noise(truth, 5, 0), 3, GateMode::incoming);
  const auto& ci = r.params[0].ci_68;
  EXPECT_LE(ci.lo, r.params[0].value);
  EXPECT_GE(ci.hi, r.params[0].value);
  const double half = 0.5 * (ci.hi - ci.lo);
  EXPECT_GT(half, 0.01);
  EXPECT_LT(half, 0.15);
  EXPECT_EQ(r.n_boot, 1000u);
}

TEST(FitOd, ObjectiveUnimodalAndMinimizerOnGrid) {
  auto rng = make_stream(21, 0);
  for (int inst = 0; inst < 20; ++inst) {
    const double od = 0.1 + 3.0 * rng.uniform();
    const auto data = synthetic_contrast_data(fig2_grid(), od, 3);
    std::vector<double> v(1000);
    const double h = 5.0 / 999;
    for (int i = 0; i < 1000; ++i)
      v[i] = weighted_sse(data, [&](double x) { return capped_poisson_contrast(x, i * h, 3); });
    const auto argmin = std::min_element(v.begin(), v.end()) - v.begin();
    for (long i = 1; i < argmin; ++i) ASSERT_LE(v[i], v[i - 1]);
    for (long i = argmin + 1; i < 1000; ++i) ASSERT_GE(v[i], v[i - 1]);
    const double fitted = estimate_od(data, 3).od;
    EXPECT_LE(std::abs(fitted - argmin * h), h);
  }
}

TEST(Bootstrap, DeterministicUnderSeed) {
  const auto data = add_noise(synthetic_contrast_data(fig2_grid(), 0.75, 3, 0.04), 6, 0);
  FitOptions o;
  o.n_boot = 1000;
  o.seed = 77;
  const auto a = fit_od(data, 3, GateMode::incoming, o);
  const auto b = fit_od(data, 3, GateMode::incoming, o);
  EXPECT_EQ(a.params[0].ci_68.lo, b.params[0].ci_68.lo);
  EXPECT_EQ(a.params[0].ci_68.hi, b.params[0].ci_68.hi);
  o.seed = 78;
  const auto c = fit_od(data, 3, GateMode::incoming, o);
  EXPECT_NE(a.params[0].ci_68.lo, c.params[0].ci_68.lo);
}

TEST(Bootstrap, ZeroNoiseGivesNarrowInterval) {
  const auto r = fit_od(synthetic_contrast_data(fig2_grid(), 0.94, 3), 3, GateMode::stored);
  EXPECT_LT(r.params[0].ci_68.hi - r.params[0].ci_68.lo, 1e-6);
  const auto s = fit_saturation(synthetic_transfer_data(transfer_grid(), {46.0, 70.0}));
  for (const auto& p : s.params) EXPECT_LT(p.ci_68.hi - p.ci_68.lo, 1e-6 * p.value);
}

TEST(Bootstrap, Preconditions) {
  auto fit = [](const DataSet& d) { return std::vector<double>{d.points[0].y}; };
  const auto data = synthetic_contrast_data(fig2_grid(), 0.75, 3);
  EXPECT_THROW(bootstrap_ci(fit, data, 99, 1), DomainError);
  auto failing = [](const DataSet&) -> std::vector<double> { throw ConvergenceError("no", {}); };
  EXPECT_THROW(bootstrap_ci(failing, data, 100, 1), InsufficientDataError);
  // Two points with one-point resamples (prob 1/2) exceed the skip budget.
  DataSet two;
  two.points = {{1.0, 0.3, 1.0}, {2.0, 0.4, 1.0}};
  EXPECT_THROW(bootstrap_ci(fit, two, 200, 1, 2), InsufficientDataError);
}

TEST(Bootstrap, QuantileType7) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.16), 1.48);
}

TEST(Bootstrap, CoverageOfTrueOd) {
  const auto truth = synthetic_contrast_data(fig2_grid(), 0.75, 3, 0.04);
  FitOptions o;
  o.n_boot = 200;
  int covered = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    o.seed = 1000 + t;
    const auto r = fit_od(add_noise(truth, 31, t), 3, GateMode::incoming, o);
    if (r.params[0].ci_68.lo <= 0.75 && 0.75 <= r.params[0].ci_68.hi) ++covered;
  }
  const double coverage = static_cast<double>(covered) / trials;
  EXPECT_GE(coverage, 0.60);
  EXPECT_LE(coverage, 0.76);
}

TEST(FitSaturation, ZeroNoiseRoundTrip) {
  const auto r = fit_saturation(synthetic_transfer_data(transfer_grid(), {46.0, 70.0}), no_boot());
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.param("a").value / 46.0, 1.0, 1e-4);
  EXPECT_NEAR(r.param("b").value / 70.0, 1.0, 1e-4);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(FitSaturation, RandomParameterRoundTrip) {
  auto rng = make_stream(12, 0);
  for (int i = 0; i < 30; ++i) {
    const SaturationParams sat{5.0 + 95.0 * rng.uniform(), 20.0 + 100.0 * rng.uniform()};
    std::vector<double> xs;
    for (int j = 1; j <= 8; ++j) xs.push_back(sat.b * 0.5 * j);
    const auto r = fit_saturation(synthetic_transfer_data(xs, sat), no_boot());
    EXPECT_NEAR(r.param("a").value / sat.a, 1.0, 1e-4);
    EXPECT_NEAR(r.param("b").value / sat.b, 1.0, 1e-4);
  }
}

TEST(FitSaturation, LinearDataIsIllConditioned) {
  DataSet d;
  for (int i = 1; i <= 6; ++i) d.points.push_back({0.5 * i, 0.5 * i, 1.0});
  const auto r = fit_saturation(d);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("ill-conditioned"), std::string::npos);
  EXPECT_TRUE(r.ci_unbounded);
  EXPECT_TRUE(std::isinf(r.param("b").ci_68.hi));
  // The initial slope a/b is still recovered.
  EXPECT_NEAR(r.param("a").value / r.param("b").value, 1.0, 1e-3);
}

TEST(FitSaturation, NeedsThreePoints) {
  DataSet d;
  d.points = {{10.0, 5.0, 1.0}, {50.0, 20.0, 1.0}};
  EXPECT_THROW(fit_saturation(d), ValidationError);
}

TEST(FitSaturation, NoisyRecoveryWithinFivePercent) {
  const auto truth = synthetic_transfer_data(transfer_grid(), {46.0, 70.0});
  std::vector<double> ea, eb;
  for (int t = 0; t < 200; ++t) {
    DataSet d = truth;
    for (auto& p : d.points) p.sigma = 0.05 * p.y;
    const auto r = fit_saturation(add_noise(d, 41, t), no_boot());
    ea.push_back(r.param("a").value / 46.0 - 1.0);
    eb.push_back(r.param("b").value / 70.0 - 1.0);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  auto median_abs = [](std::vector<double> v) {
    for (auto& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  EXPECT_LT(std::abs(mean(ea)), 0.05);
  EXPECT_LT(std::abs(mean(eb)), 0.05);
  EXPECT_LT(median_abs(ea), 0.05);
  EXPECT_LT(median_abs(eb), 0.05);
}

TEST(NelderMead, Rosenbrock) {
  auto f = [](const std::vector<double>& v) {
    return 100.0 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1.0 - v[0], 2);
  };
  auto r = nelder_mead(f, {-1.2, 1.0}, 1e-10);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(DataSet, Violations) {
  DataSet d;
  EXPECT_FALSE(d.violations(1).empty());
  d.points = {{0.0, 0.0, 1.0}, {1.0, 0.1, 1.0}};
  EXPECT_TRUE(d.violations(1).empty());
  EXPECT_FALSE(d.violations(2).empty());
  d.points.push_back({2.0, std::nan(""), 1.0});
  EXPECT_FALSE(d.violations(2).empty());
}
