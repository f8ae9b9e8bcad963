#include "ltqr/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltqr/error.hpp"
#include "ltqr/parallel.hpp"

namespace ltqr {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectRecord> subjects,
                                         std::vector<std::string> covariate_names)
    : subjects_(std::move(subjects)) {
  if (subjects_.empty()) throw Error("dataset has no subjects", "subjects");
  p_ = static_cast<int>(subjects_.front().x.size());
  if (p_ < 1) throw Error("covariate vector must include the intercept", "x");

  for (const auto& s : subjects_) {
    const std::string where = "subject " + s.id;
    if (s.times.empty()) throw Error(where + ": no observations", "times");
    if (s.times.size() != s.y.size()) throw Error(where + ": times and y differ in length", "y");
    if (!all_finite(s.times) || !all_finite(s.y)) throw Error(where + ": non-finite value", "y");
    for (std::size_t j = 1; j < s.times.size(); ++j) {
      if (!(s.times[j] > s.times[j - 1]))
        throw Error(where + ": observation times must be strictly increasing", "time");
    }
    if (s.x.size() != p_) throw Error(where + ": covariate length differs from p", "x");
    if (s.x[0] != 1.0) throw Error(where + ": first covariate must be the intercept 1", "x");
    if (!s.x.allFinite()) throw Error(where + ": non-finite covariate", "x");
    if (!(s.delta > 0.0) || !std::isfinite(s.delta))
      throw Error(where + ": delta must be positive", "delta");
  }

  if (covariate_names.empty()) {
    names_.push_back("intercept");
    for (int j = 1; j < p_; ++j) names_.push_back("x" + std::to_string(j));
  } else if (static_cast<int>(covariate_names.size()) == p_ - 1) {
    names_.push_back("intercept");
    names_.insert(names_.end(), covariate_names.begin(), covariate_names.end());
  } else if (static_cast<int>(covariate_names.size()) == p_) {
    names_ = std::move(covariate_names);
  } else {
    throw Error("covariate names do not match p", "covariate_names");
  }
}

LongitudinalDataset LongitudinalDataset::canonical() const {
  LongitudinalDataset out = *this;
  std::stable_sort(out.subjects_.begin(), out.subjects_.end(),
                   [](const SubjectRecord& a, const SubjectRecord& b) { return a.id < b.id; });
  return out;
}

void ModelConfig::validate() const {
  if (k < 0) throw Error("polynomial order must be nonnegative", "k");
  if (!std::isfinite(t_star)) throw Error("t_star must be finite", "t_star");
  if (tau_grid.empty()) throw Error("tau grid is empty", "tau_grid");
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (!(tau_grid[i] > 0.0 && tau_grid[i] < 1.0))
      throw Error("tau values must lie in (0, 1)", "tau_grid");
    if (i > 0 && !(tau_grid[i] > tau_grid[i - 1]))
      throw Error("tau grid must be strictly increasing", "tau_grid");
  }
  if (const auto* fixed = std::get_if<FixedBandwidth>(&bandwidth)) {
    if (!(fixed->h > 0.0) || !std::isfinite(fixed->h)) throw Error("h must be positive", "h");
  } else {
    const auto& search = std::get<AutoBandwidth>(bandwidth);
    if (search.grid.empty()) throw Error("bandwidth grid is empty", "h_grid");
    for (double h : search.grid)
      if (!(h > 0.0) || !std::isfinite(h)) throw Error("h grid values must be positive", "h_grid");
    if (search.n_c < 2) throw Error("n_c must be at least 2", "n_c");
  }
}

Eigen::MatrixXd build_design_matrix(std::span<const double> times, int k) {
  const auto m = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd z(m, k + 1);
  for (Eigen::Index j = 0; j < m; ++j) {
    double power = 1.0;
    for (int l = 0; l <= k; ++l) {
      z(j, l) = power;
      power *= times[static_cast<std::size_t>(j)];
    }
  }
  return z;
}

Eigen::VectorXd feature_contrast(int k, double t_star) {
  if (k < 1) throw Error("feature undefined for constant trajectory", "k");
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(k + 1);
  double power = 1.0;  // t_star^(j-1)
  for (int j = 1; j <= k; ++j) {
    gamma[j] = j * power;
    power *= t_star;
  }
  return gamma;
}

const char* to_string(ExclusionReason reason) noexcept {
  switch (reason) {
    case ExclusionReason::TooFewObservations: return "TooFewObservations";
    case ExclusionReason::SingularDesign: return "SingularDesign";
  }
  return "unknown";
}

SubjectOutcome fit_subject(const SubjectRecord& record, int k, const Eigen::VectorXd& gamma) {
  const int q = k + 1;
  const std::size_t m = record.times.size();
  if (m < static_cast<std::size_t>(q) + 1) return Excluded{ExclusionReason::TooFewObservations};

  const Eigen::MatrixXd z = build_design_matrix(record.times, k);
  const Eigen::Map<const Eigen::VectorXd> y(record.y.data(), static_cast<Eigen::Index>(m));

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();

  // cond(Z'Z) = cond(R)^2
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[q - 1];
  if (!(smax > 0.0) || (smin / smax) * (smin / smax) < kSingularRcond)
    return Excluded{ExclusionReason::SingularDesign};

  SubjectFit fit;
  fit.m = m;
  fit.alpha_hat = qr.solve(y);
  fit.b_hat = gamma.dot(fit.alpha_hat);

  // gamma' (R'R)^{-1} gamma = |R^{-T} gamma|^2
  const Eigen::VectorXd w = r.transpose().triangularView<Eigen::Lower>().solve(gamma);
  fit.d = record.delta * w.squaredNorm();

  // residuals on the delta-standardized scale
  const Eigen::VectorXd resid = y - z * fit.alpha_hat;
  fit.rss = resid.squaredNorm() / record.delta;
  return fit;
}

SubjectOutcome fit_subject(const SubjectRecord& record, const ModelConfig& config) {
  return fit_subject(record, config.k, feature_contrast(config.k, config.t_star));
}

double pooled_sigma2(std::span<const double> rss, std::span<const std::size_t> m, int q) {
  if (rss.size() != m.size()) throw Error("rss and m differ in length", "rss");
  const std::size_t n_obs = std::accumulate(m.begin(), m.end(), std::size_t{0});
  const double dof = static_cast<double>(n_obs) - static_cast<double>(q) * static_cast<double>(m.size());
  if (!(dof > 0.0)) throw Error("insufficient residual degrees of freedom", "sigma2");
  const double total = std::accumulate(rss.begin(), rss.end(), 0.0);
  return total / dof;
}

StageOneResult fit_stage_one(const LongitudinalDataset& data, const ModelConfig& config,
                             int workers) {
  config.validate();
  StageOneResult out;
  out.gamma = feature_contrast(config.k, config.t_star);
  out.q = config.k + 1;

  const auto& subjects = data.subjects();
  std::vector<SubjectOutcome> outcomes(subjects.size(), Excluded{ExclusionReason::TooFewObservations});
  parallel_for(subjects.size(), workers, [&](std::size_t i) {
    outcomes[i] = fit_subject(subjects[i], config.k, out.gamma);
  });

  std::vector<double> rss;
  std::vector<std::size_t> m;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (const auto* fit = std::get_if<SubjectFit>(&outcomes[i])) {
      out.included.push_back(i);
      rss.push_back(fit->rss);
      m.push_back(fit->m);
      out.fits.push_back(*fit);
    } else {
      out.excluded.push_back({i, subjects[i].id, std::get<Excluded>(outcomes[i]).reason});
    }
  }
  out.n_used = out.included.size();
  out.n_obs = std::accumulate(m.begin(), m.end(), std::size_t{0});
  out.sigma2_hat = pooled_sigma2(rss, m, out.q);
  return out;
}

FeatureSample make_feature_sample(const LongitudinalDataset& data, const StageOneResult& stage1) {
  const auto n = static_cast<Eigen::Index>(stage1.n_used);
  FeatureSample s;
  s.q = stage1.q;
  s.b_hat.resize(n);
  s.d.resize(n);
  s.rss.resize(n);
  s.x.resize(n, data.p());
  s.m.resize(stage1.n_used);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& fit = stage1.fits[static_cast<std::size_t>(i)];
    s.b_hat[i] = fit.b_hat;
    s.d[i] = fit.d;
    s.rss[i] = fit.rss;
    s.m[static_cast<std::size_t>(i)] = fit.m;
    s.x.row(i) = data.subjects()[stage1.included[static_cast<std::size_t>(i)]].x.transpose();
  }
  return s;
}

}  // namespace ltqr
