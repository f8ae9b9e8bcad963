#pragma once

// Perturbation-resampling inference and second-stage summaries.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ltqr/estimator.hpp"
#include "ltqr/model_core.hpp"

namespace ltqr {

struct ResampleOptions {
  int n_b = 200;
  double alpha = 0.05;
  std::optional<double> known_sigma2;  // skip the sigma^2 resampling step
  bool unit_weights = false;           // force every weight to 1 (test hook)
  double max_drop_fraction = 0.10;
  MinimizeOptions minimize{};
  std::uint64_t seed = 1;
  int workers = 0;
};

struct ResampleDraws {
  std::vector<double> tau_grid;
  int n_b_requested = 0;
  int n_b_used = 0;
  int n_b_dropped = 0;
  bool flagged = false;  // more than max_drop_fraction of replicates dropped
  double alpha = 0.05;
  double h = 0.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd beta_hat;               // p x |grid|
  std::vector<Eigen::MatrixXd> beta_star;  // n_b_used replicates, each p x |grid|
  std::vector<double> sigma2_star;         // n_b_used
  Eigen::MatrixXd se;                      // p x |grid|
  Eigen::MatrixXd ci_lower, ci_upper;      // normal approximation
  Eigen::MatrixXd pct_lower, pct_upper;    // empirical percentiles

  [[nodiscard]] int p() const noexcept { return static_cast<int>(beta_hat.rows()); }
};

/// Exponential(1) multiplier bootstrap of the corrected estimator.
ResampleDraws resample_fit(const FeatureSample& sample, const Eigen::MatrixXd& beta_hat,
                           std::span<const double> tau_grid, double h, double sigma2_hat,
                           const ResampleOptions& options);

/// sigma*^2 = ((N - q n)^-1 sum w_i RSS_i) / (n^-1 sum w_i).
double resampled_sigma2(const FeatureSample& sample, const Eigen::VectorXd& weights);

/// Recomputes se and both interval types from beta_star.
void summarize_draws(ResampleDraws& draws);

/// Trapezoidal average of `values` over the grid points inside [lo, hi].
double window_average(std::span<const double> taus, std::span<const double> values, double lo,
                      double hi);

/// Integral over [lo, hi] of I{tau > (lo+hi)/2} (values(tau) - window average),
/// by the trapezoidal rule on the grid points inside the window.
double constancy_functional(std::span<const double> taus, std::span<const double> values,
                            double lo, double hi);

struct ConstancyTestResult {
  int coefficient = 0;
  double statistic = 0.0;
  double lower = 0.0;  // reject when statistic < lower
  double upper = 0.0;  // or statistic > upper
  bool reject = false;
  double tau_lo = 0.0;
  double tau_hi = 0.0;
  double alpha = 0.05;
};

/// Constancy test for coefficient j over [tau_lo, tau_hi], calibrated by the
/// same functional applied to the resampling draws centered at beta_hat.
ConstancyTestResult constancy_test(const ResampleDraws& draws, int j, double tau_lo,
                                   double tau_hi, double alpha);

struct AverageEffect {
  Eigen::VectorXd estimate;  // length p
  Eigen::VectorXd se;        // resampling SE of the same functional
  bool se_exceeds_pointwise = false;  // soft diagnostic, logged by callers
};

AverageEffect average_effect(const ResampleDraws& draws, double tau_lo, double tau_hi);

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double prob);

}  // namespace ltqr
