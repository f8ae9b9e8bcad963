// Monte-Carlo studies of statistical properties; slow, labelled "slow" in ctest.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "ltqr/estimator.hpp"
#include "ltqr/inference.hpp"
#include "ltqr/simgen.hpp"
#include "support.hpp"

using namespace ltqr;

namespace {

std::vector<double> grid_01_09() {
  std::vector<double> g;
  for (int i = 1; i <= 9; ++i) g.push_back(i / 10.0);
  return g;
}

ReplicationReport study(SimScenario sc, std::vector<double> taus, int n_reps, int n_b) {
  ReplicationOptions ro;
  ro.n_reps = n_reps;
  ro.n_b = n_b;
  return run_replication(sc, scenario_config(sc, std::move(taus), 0.8), ro);
}

double rejection_rate(const SimScenario& base, int n_reps, std::uint64_t seed_offset) {
  const std::vector<double> taus = grid_01_09();
  int rejections = 0;
  for (int r = 0; r < n_reps; ++r) {
    SimScenario sc = base;
    sc.seed = derive_key(base.seed, {seed_offset, static_cast<std::uint64_t>(r)});
    const SimulatedData sim = generate(sc);
    FitAllOptions fo;
    fo.workers = 1;
    const QuantileFitResult fit = fit_all(sim.data, scenario_config(sc, taus, 0.8), fo);
    ResampleOptions ro;
    ro.n_b = 200;
    ro.seed = sc.seed;
    ro.workers = 1;
    const ResampleDraws d = resample_fit(fit.sample, fit.beta_hat, fit.tau_grid, fit.h_used, fit.sigma2_used, ro);
    if (constancy_test(d, 1, 0.1, 0.9, 0.05).reject) ++rejections;
  }
  return static_cast<double>(rejections) / n_reps;
}

}  // namespace

TEST_CASE("mean beta1(tau) is nondecreasing at n = 2000") {
  SimScenario sc;
  sc.n = 2000;
  sc.seed = 5001;
  const ReplicationReport r = study(sc, grid_01_09(), 50, 0);
  REQUIRE_FALSE(r.run_failed);
  std::vector<double> means;
  for (std::size_t t = 0; t < r.tau_grid.size(); ++t) means.push_back(r.cell(t, 1).truth + r.cell(t, 1).bias_proposed);
  for (std::size_t t = 1; t < means.size(); ++t)
    CHECK_MESSAGE(means[t] >= means[t - 1], "tau " << r.tau_grid[t] << ": " << means[t] << " < " << means[t - 1]);
}

TEST_CASE("bias correction dominates the naive fit over 500 replicates") {
  SimScenario sc;
  sc.n = 500;
  sc.seed = 5002;
  const ReplicationReport r = study(sc, {0.1, 0.5, 0.9}, 500, 0);
  REQUIRE_FALSE(r.run_failed);
  for (std::size_t t : {0u, 2u}) {
    const auto& c = r.cell(t, 1);
    MESSAGE("tau " << r.tau_grid[t] << ": proposed " << c.bias_proposed << ", naive " << c.bias_naive);
    CHECK(std::abs(c.bias_proposed) < std::abs(c.bias_naive));
  }
}

TEST_CASE("Case 1 replication: median bias and tail dominance over 200 replicates") {
  SimScenario sc;
  sc.n = 500;
  sc.seed = 5003;
  const ReplicationReport r = study(sc, {0.1, 0.5, 0.9}, 200, 0);
  REQUIRE_FALSE(r.run_failed);
  MESSAGE("beta1(0.5) bias " << r.cell(1, 1).bias_proposed);
  CHECK(std::abs(r.cell(1, 1).bias_proposed) < 0.05);
  CHECK(std::abs(r.cell(0, 1).bias_naive) > std::abs(r.cell(0, 1).bias_proposed));
}

TEST_CASE("normal-approximation coverage over 500 replicates") {
  SimScenario sc;
  sc.n = 500;
  sc.seed = 5004;
  const ReplicationReport r = study(sc, {0.5}, 500, 200);
  REQUIRE_FALSE(r.run_failed);
  const auto& c = r.cell(0, 1);
  MESSAGE("coverage " << c.coverage << ", mean SE " << c.mean_se << ", SD " << c.sd_proposed);
  CHECK(c.coverage >= 0.92);
  CHECK(c.coverage <= 0.975);
  CHECK(std::abs(c.mean_se / c.sd_proposed - 1.0) <= 0.20);
}

TEST_CASE("resampling SD tracks the Monte-Carlo SD at n = 2000") {
  SimScenario sc;
  sc.n = 2000;
  sc.seed = 5005;
  const ReplicationReport mc = study(sc, {0.5}, 500, 0);
  REQUIRE_FALSE(mc.run_failed);
  sc.seed = 5006;
  const ReplicationReport rs = study(sc, {0.5}, 50, 200);
  REQUIRE_FALSE(rs.run_failed);
  const double sd = mc.cell(0, 1).sd_proposed;
  const double se = rs.cell(0, 1).mean_se;
  MESSAGE("Monte-Carlo SD " << sd << ", mean resampling SD " << se);
  CHECK(std::abs(se - sd) / sd < 0.15);
}

TEST_CASE("constancy test power and size over 200 replicates") {
  SimScenario power;
  power.n = 500;
  power.seed = 5007;
  const double reject_power = rejection_rate(power, 200, 1);
  MESSAGE("rejection rate, nonconstant beta1: " << reject_power);
  CHECK(reject_power > 0.5);

  SimScenario size = power;
  size.seed = 5008;
  size.overrides.noise_x1 = 0.0;
  size.overrides.noise_x2 = 0.0;
  const double reject_size = rejection_rate(size, 200, 2);
  MESSAGE("rejection rate, constant beta1: " << reject_size);
  CHECK(reject_size >= 0.02);
  CHECK(reject_size <= 0.10);
}
