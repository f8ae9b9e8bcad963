#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ltqr/model_core.hpp"
#include "ltqr/optimizer.hpp"
#include "ltqr/smoothed_loss.hpp"

namespace ltqr {

struct BandwidthSearch;

/// Linear quantile regression of b on x (check loss, no smoothing).
///
/// Iteratively reweighted least squares gives a starting point; an exact
/// basis-exchange descent over exact-fit solutions then finishes at an
/// optimal vertex. With an intercept-only design the lower order statistic
/// with 1-based index ceil(n tau) is returned.
/// Throws ltqr::Error when x is rank deficient.
Eigen::VectorXd naive_qr(const Eigen::VectorXd& b, const Eigen::MatrixXd& x, double tau);

struct EstimatorOptions {
  MinimizeOptions minimize{};
  int n_restarts = 5;         // jittered restarts around the naive estimate
  double jitter_scale = 0.1;  // jitter sd = jitter_scale * |beta_naive|
};

struct FitDiagnostics {
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;
  double objective_start = 0.0;
  double objective = 0.0;
  int starts = 0;
  int converged_starts = 0;
  std::string message;
};

struct QuantileFit {
  Eigen::VectorXd beta;
  FitDiagnostics diagnostics;
};

/// Single local minimization of the corrected objective from `start`.
QuantileFit minimize_corrected(const FeatureSample& sample, const LossParams& loss,
                               const Eigen::VectorXd& start, const MinimizeOptions& options);

/// Corrected estimator at one tau: multi-start minimization from the naive
/// estimate, an optional warm start, and seeded jittered restarts; the
/// converged start with the smallest objective wins.
QuantileFit fit_quantile(const FeatureSample& sample, const LossParams& loss,
                         const EstimatorOptions& options, std::uint64_t jitter_key,
                         const Eigen::VectorXd* warm_start = nullptr,
                         const Eigen::VectorXd* naive_start = nullptr);

struct FitAllOptions {
  EstimatorOptions estimator{};
  std::optional<double> known_sigma2;  // replaces the pooled estimate when set
  bool reverse_sweep = false;          // sweep the tau grid from the top
  int workers = 0;                     // 0: all cores
};

struct QuantileFitResult {
  std::vector<double> tau_grid;
  std::vector<std::string> coefficient_names;
  Eigen::MatrixXd beta_naive;  // p x |grid|
  Eigen::MatrixXd beta_hat;    // p x |grid|
  std::vector<bool> converged;
  std::vector<double> objective_at_opt;
  std::vector<FitDiagnostics> diagnostics;
  double h_used = 0.0;
  double sigma2_used = 0.0;
  StageOneResult stage1;
  std::shared_ptr<const BandwidthSearch> bandwidth_search;  // set for automatic h
  LongitudinalDataset data;                                 // canonical order
  FeatureSample sample;

  [[nodiscard]] bool all_converged() const;
};

/// Stage 1, pooled sigma^2, bandwidth resolution, then one fit per tau.
/// Subjects are processed in canonical (id-sorted) order.
QuantileFitResult fit_all(const LongitudinalDataset& data, const ModelConfig& config,
                          const FitAllOptions& options = {});

/// Stream domain tags for derive_key.
namespace stream {
inline constexpr std::uint64_t kJitter = 0x4a17;
inline constexpr std::uint64_t kBandwidth = 0xba4d;
inline constexpr std::uint64_t kResample = 0x5e5a;
inline constexpr std::uint64_t kReplicate = 0x2e91;
}  // namespace stream

}  // namespace ltqr
