#pragma once

// Smoothed check loss and its measurement-error corrected version.
//
// The smoother K is the standard normal CDF. For a standardized residual
// xi = (b - x'beta) / sqrt(D), the corrected loss
//
//   rho*(xi) = rho_h(xi) - (sigma2 / 2) * rho_h''(xi)
//
// has conditional expectation rho_h(true xi) when the proxy error is
// Laplace with variance sigma2, and agrees with the two-term expansion of
// the exact correction under normal errors.

#include <span>

#include <Eigen/Dense>

#include "ltqr/model_core.hpp"

namespace ltqr {

struct LossParams {
  double tau = 0.5;
  double h = 0.8;
  double sigma2 = 0.0;

  void validate() const;
};

/// |u| beyond which K', K'' and higher derivatives are taken as zero.
inline constexpr double kGaussianTailCutoff = 40.0;

/// K^(order)(u) for order 0..4.
double smoother(double u, int order);

double rho_tau(double v, double tau);
double rho_smooth(double v, const LossParams& params);

/// j-th derivative (j = 1..4) of v -> v K(v / h).
double vK_derivative(double v, double h, int j);

double rho_corrected(double xi, const LossParams& params);

/// d rho* / d xi.
double rho_corrected_derivative(double xi, const LossParams& params);

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Sum_i w_i rho*(xi_i(beta)) and its gradient with respect to beta.
ObjectiveValue corrected_objective(const Eigen::VectorXd& beta, const FeatureSample& sample,
                                   const LossParams& params);

/// Value only; skips the gradient accumulation.
double corrected_objective_value(const Eigen::VectorXd& beta, const FeatureSample& sample,
                                 const LossParams& params);

/// Sum_i rho_tau(b_i - x_i'beta); the unsmoothed, uncorrected objective.
double check_objective(const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& x, double tau);

}  // namespace ltqr
