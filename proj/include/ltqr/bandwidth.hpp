#pragma once

// Simulation-extrapolation choice of the smoothing bandwidth.
//
// For each candidate h, extra proxy noise is added once (B*) and twice
// (B** = B* + more noise); M1(h) and M2(h) measure how far the refitted
// coefficients move, in units of their own sample covariance. With
// h1 = argmin M1 and h2 = argmin M2, log-linear back-extrapolation gives
// the selected bandwidth h1^2 / h2.

#include <cstdint>
#include <vector>

#include "ltqr/estimator.hpp"
#include "ltqr/rng.hpp"
#include "ltqr/model_core.hpp"

namespace ltqr {

struct BandwidthOptions {
  std::vector<double> h_grid;
  int n_c = 20;
  ErrorFamily family = ErrorFamily::Laplace;
  EstimatorOptions estimator{};
  std::uint64_t seed = 1;
  int workers = 0;
  double noise_scale = 1.0;  // multiplies the injected noise variance; 0 disables it
};

struct BandwidthSearch {
  std::vector<double> h_grid;
  int n_c = 0;
  double tau = 0.5;
  double selected = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  std::vector<double> m1_curve;
  std::vector<double> m2_curve;
  std::vector<bool> disqualified;   // a fit failed to converge at this h
  std::vector<bool> ridge_applied;  // S* or S** needed a ridge at this h
};

/// Default candidate grid: 0.4 to 1.6 in steps of 0.1.
std::vector<double> default_h_grid();

/// Draw from the configured family with mean 0 and the given variance.
double draw_proxy_noise(CounterRng& rng, ErrorFamily family, double variance);

/// Log-linear back-extrapolation h1^2 / h2.
double extrapolate_bandwidth(double h1, double h2);

BandwidthSearch select_bandwidth(const FeatureSample& sample, double tau, double sigma2,
                                 const BandwidthOptions& options);

/// n_c^-1 sum_c dev_c' S^-1 dev_c with S the sample covariance of the rows
/// of `deviations` (n_c x p). Adds a ridge when S is singular.
double mean_mahalanobis(const Eigen::MatrixXd& deviations, bool* ridge_applied = nullptr);

}  // namespace ltqr
