#pragma once

// Synthetic longitudinal designs and the Monte-Carlo replication harness.
//
// Every scenario draws
//   X1 ~ Unif(0, 0.5), X2 ~ Ber(0.5), e ~ N(0, 1),
//   B  = 2 + X1 + X2 + (0.1 + X1 + X2) e          (latent rate),
//   m  = floor(4 + Unif(0, 6)) observation times from a Poisson process,
// so that Q_B(tau | X) = (2 + 0.1 Qe) + (1 + Qe) X1 + (1 + Qe) X2.
//
// Linear cases observe a + B t + eps with a ~ Exp(0.8); quadratic cases
// observe a + b t + c t^2 + eps/(1 + X1) with a, c ~ Exp(0.15) and
// b = B - 2 c t*. "Laplace" always means the classical symmetric Laplace
// parameterized by its variance, the family the corrected loss assumes.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ltqr/estimator.hpp"
#include "ltqr/inference.hpp"
#include "ltqr/model_core.hpp"
#include "ltqr/rng.hpp"

namespace ltqr {

enum class SimCase {
  Case1,             // Laplace errors, delta = 1
  Case2,             // normal errors, delta = 1
  Case3,             // Laplace errors / (1 + X1)
  Case4,             // normal errors / (1 + X1)
  QuadraticLaplace,  // quadratic trajectory, Laplace errors / (1 + X1)
  QuadraticNormal,   // quadratic trajectory, normal errors / (1 + X1)
  RobustUniform,     // Unif(-sqrt(3)/2, sqrt(3)/2) errors, fitted as Laplace
};

/// Parameter overrides; defaults give the standard designs.
struct SimOverrides {
  double intercept_rate = 0.8;  // a ~ Exp(rate), linear cases
  double time_rate = 0.8;       // Poisson-process intensity
  double quadratic_rate = 0.15;  // a, c ~ Exp(rate), quadratic cases
  double t_star = 1.0;          // quadratic cases
  double noise_intercept = 0.1;  // B = 2 + X1 + X2 + (c0 + c1 X1 + c2 X2) e
  double noise_x1 = 1.0;
  double noise_x2 = 1.0;
  double error_variance = 1.0;  // variance of the trajectory error (before 1/(1+X1))
};

struct SimScenario {
  SimCase sim_case = SimCase::Case1;
  std::size_t n = 500;
  std::uint64_t seed = 1;
  SimOverrides overrides{};
};

struct HiddenTruth {
  std::vector<Eigen::VectorXd> alpha;  // per subject, length k + 1
  std::vector<double> b;               // latent feature B_i
};

struct SimulatedData {
  LongitudinalDataset data;
  HiddenTruth truth;
  int k = 1;
  double t_star = 0.0;
  ErrorFamily family = ErrorFamily::Laplace;
  double sigma2 = 1.0;  // true error variance on the delta-standardized scale
};

std::string_view to_string(SimCase c) noexcept;

/// Parses names such as "case1", "quadratic-laplace", "robust-uniform".
SimCase parse_sim_case(std::string_view name);

/// Quantile-regression coefficients of B given (1, X1, X2) at level tau.
Eigen::VectorXd true_beta(const SimScenario& scenario, double tau);

SimulatedData generate(const SimScenario& scenario);

/// Model configuration matching a scenario (order, t*, family) with a fixed h.
ModelConfig scenario_config(const SimScenario& scenario, std::vector<double> tau_grid, double h);

struct ReplicationOptions {
  int n_reps = 100;
  int n_b = 200;
  double alpha = 0.05;
  EstimatorOptions estimator{};
  double max_fail_fraction = 0.05;
  int workers = 0;
};

/// Per (tau, coefficient) summaries over replicates.
struct ReplicationCell {
  double truth = 0.0;
  double bias_naive = 0.0;
  double bias_proposed = 0.0;
  double sd_naive = 0.0;
  double sd_proposed = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;  // normal-approximation interval at level 1 - alpha
};

struct ReplicationReport {
  SimScenario scenario;
  std::vector<double> tau_grid;
  std::vector<std::string> coefficient_names;
  int n_reps_requested = 0;
  int n_reps_used = 0;
  int n_reps_failed = 0;
  bool run_failed = false;  // failures exceeded max_fail_fraction
  std::vector<std::vector<ReplicationCell>> cells;  // [tau][coef]

  // Raw per-replicate values, [rep] -> p x |grid|
  std::vector<Eigen::MatrixXd> beta_naive;
  std::vector<Eigen::MatrixXd> beta_hat;
  std::vector<Eigen::MatrixXd> se;

  [[nodiscard]] const ReplicationCell& cell(std::size_t tau_index, std::size_t coef) const {
    return cells.at(tau_index).at(coef);
  }
};

/// generate -> fit_all -> resample_fit per replicate; n_b = 0 skips resampling.
ReplicationReport run_replication(const SimScenario& scenario, const ModelConfig& config,
                                  const ReplicationOptions& options);

}  // namespace ltqr
