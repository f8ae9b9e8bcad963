#pragma once

// Data model and stage-1 (per-subject trajectory) computations.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace ltqr {

/// One subject's repeated measures and level-2 covariates.
struct SubjectRecord {
  std::string id;
  std::vector<double> times;  // strictly increasing
  std::vector<double> y;      // same length as times
  Eigen::VectorXd x;          // length p, x[0] == 1
  double delta = 1.0;         // known error-scale multiplier, > 0
};

/// Validated collection of subjects sharing a covariate dimension p.
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;

  /// Throws ltqr::Error when any subject violates the record invariants.
  LongitudinalDataset(std::vector<SubjectRecord> subjects,
                      std::vector<std::string> covariate_names = {});

  [[nodiscard]] const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
  [[nodiscard]] std::size_t size() const noexcept { return subjects_.size(); }
  [[nodiscard]] int p() const noexcept { return p_; }

  /// Names of the p coefficients, "intercept" first.
  [[nodiscard]] const std::vector<std::string>& coefficient_names() const noexcept { return names_; }

  /// Copy with subjects sorted by id; the canonical order used for fitting.
  [[nodiscard]] LongitudinalDataset canonical() const;

 private:
  std::vector<SubjectRecord> subjects_;
  std::vector<std::string> names_;
  int p_ = 0;
};

enum class ErrorFamily { Normal, Laplace };

struct FixedBandwidth {
  double h = 0.8;
};

struct AutoBandwidth {
  std::vector<double> grid;
  int n_c = 20;
};

using BandwidthPolicy = std::variant<FixedBandwidth, AutoBandwidth>;

struct ModelConfig {
  int k = 1;
  double t_star = 0.0;
  ErrorFamily error_family = ErrorFamily::Laplace;
  std::vector<double> tau_grid{0.5};
  BandwidthPolicy bandwidth = FixedBandwidth{};
  std::uint64_t seed = 1;

  /// Throws ltqr::Error naming the offending field.
  void validate() const;
};

/// Vandermonde design: entry (j, l) = times[j]^l, l = 0..k.
Eigen::MatrixXd build_design_matrix(std::span<const double> times, int k);

/// Contrast mapping trajectory coefficients to the derivative at t_star.
/// Throws for k = 0, where the rate is identically zero.
Eigen::VectorXd feature_contrast(int k, double t_star);

enum class ExclusionReason { TooFewObservations, SingularDesign };

const char* to_string(ExclusionReason reason) noexcept;

struct SubjectFit {
  Eigen::VectorXd alpha_hat;
  double b_hat = 0.0;
  double d = 0.0;
  double rss = 0.0;
  std::size_t m = 0;
};

struct Excluded {
  ExclusionReason reason;
};

using SubjectOutcome = std::variant<SubjectFit, Excluded>;

/// Reciprocal condition number of Z'Z below which a subject is excluded.
inline constexpr double kSingularRcond = 1e-12;

SubjectOutcome fit_subject(const SubjectRecord& record, int k, const Eigen::VectorXd& gamma);
SubjectOutcome fit_subject(const SubjectRecord& record, const ModelConfig& config);

/// Sum(rss) / (N - q n). Throws when the denominator is not positive.
double pooled_sigma2(std::span<const double> rss, std::span<const std::size_t> m, int q);

struct ExclusionEntry {
  std::size_t index;  // position in the dataset
  std::string id;
  ExclusionReason reason;
};

struct StageOneResult {
  Eigen::VectorXd gamma;
  int q = 0;
  std::vector<std::size_t> included;  // dataset positions, in dataset order
  std::vector<SubjectFit> fits;       // parallel to `included`
  std::vector<ExclusionEntry> excluded;
  double sigma2_hat = 0.0;
  std::size_t n_used = 0;
  std::size_t n_obs = 0;  // N over included subjects
};

/// Fits every subject, then pools sigma^2 over the included ones.
StageOneResult fit_stage_one(const LongitudinalDataset& data, const ModelConfig& config,
                             int workers = 1);

/// Stage-2 view of the included subjects: proxies, covariates, scales.
struct FeatureSample {
  Eigen::VectorXd b_hat;
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd d;
  Eigen::VectorXd rss;
  std::vector<std::size_t> m;
  int q = 0;
  Eigen::VectorXd weights;  // empty means unit weights

  [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(b_hat.size()); }
  [[nodiscard]] int p() const noexcept { return static_cast<int>(x.cols()); }
  [[nodiscard]] bool weighted() const noexcept { return weights.size() != 0; }
};

FeatureSample make_feature_sample(const LongitudinalDataset& data, const StageOneResult& stage1);

}  // namespace ltqr
