// Source transfer and gain at the 90 us settings: analytic curves next to a
// small Monte Carlo scan.

#include <cstdio>
#include <vector>

#include "rydtx/models.hpp"
#include "rydtx/montecarlo.hpp"

int main() {
  using namespace rydtx;
  SimConfig cfg = calibrated_90us_config();
  cfg.seed = 2014;
  const SaturationParams sat = *cfg.sat;
  const double c = expected_window_contrast(cfg);
  const double c_st = fock_contrast(1, effective_od(cfg.params.od_st, cfg.t_int, cfg.retention_tau), cfg.params.cap);

  std::vector<double> ns;
  for (int i = 1; i <= 10; ++i) ns.push_back(25.0 * i);
  const auto pts = transfer_scan(cfg, ns, 4000, 0);

  std::printf("# C = %.4f (coherent gate, n_gate_in = %.2f)\n", c, cfg.n_gate_in);
  std::printf("%8s %10s %10s %10s %10s %10s\n", "N_in", "no_gate", "mc", "gain", "mc_gain", "gain_st");
  for (const auto& p : pts) {
    const double no = transfer(p.n_source_in, sat);
    const double g_st = c_st * no;
    std::printf("%8.1f %10.3f %10.3f %10.3f %10.3f %10.3f\n", p.n_source_in, no, p.no_gate, c * no, p.gain(), g_st);
  }
  std::printf("# asymptotic gain %.2f, single stored excitation %.2f\n", c * sat.a, c_st * sat.a);
}
