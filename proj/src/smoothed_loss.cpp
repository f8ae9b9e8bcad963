#include "ltqr/smoothed_loss.hpp"

#include <cmath>
#include <numbers>

#include "ltqr/error.hpp"

namespace ltqr {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;

double normal_cdf(double u) { return 0.5 * std::erfc(-u * std::numbers::sqrt2 / 2.0); }

double normal_pdf(double u) {
  if (std::abs(u) > kGaussianTailCutoff) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

struct LossTerms {
  double value;
  double slope;
};

// rho* and d rho*/d xi with one erfc and one exp.
//   {vK}''  = phi(u) (2 - u^2) / h
//   {vK}''' = phi(u) (u^3 - 4u) / h^2
LossTerms corrected_terms(double xi, const LossParams& p) {
  const double u = xi / p.h;
  const double cdf = normal_cdf(u);
  const double pdf = normal_pdf(u);
  if (pdf == 0.0) return {xi * (p.tau - 1.0 + cdf), p.tau - 1.0 + cdf};
  const double second = pdf * (2.0 - u * u) / p.h;
  const double third = pdf * u * (u * u - 4.0) / (p.h * p.h);
  const double half_s2 = 0.5 * p.sigma2;
  return {xi * (p.tau - 1.0 + cdf) - half_s2 * second,
          p.tau - 1.0 + cdf + u * pdf - half_s2 * third};
}

}  // namespace

void LossParams::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw Error("tau must lie in (0, 1)", "tau");
  if (!(h > 0.0) || !std::isfinite(h)) throw Error("h must be positive", "h");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw Error("sigma2 must be nonnegative", "sigma2");
}

double smoother(double u, int order) {
  if (order == 0) return normal_cdf(u);
  if (order < 0 || order > 4) throw Error("smoother derivative order must be 0..4", "order");
  const double pdf = normal_pdf(u);
  if (pdf == 0.0) return 0.0;
  switch (order) {
    case 1: return pdf;
    case 2: return -u * pdf;
    case 3: return (u * u - 1.0) * pdf;
    case 4: return u * (3.0 - u * u) * pdf;
    default: throw Error("smoother derivative order must be 0..4", "order");
  }
}

double rho_tau(double v, double tau) { return v * (tau - (v < 0.0 ? 1.0 : 0.0)); }

double rho_smooth(double v, const LossParams& params) {
  return v * (params.tau - 1.0 + normal_cdf(v / params.h));
}

double vK_derivative(double v, double h, int j) {
  if (j < 1 || j > 4) throw Error("derivative order must be 1..4", "j");
  const double u = v / h;
  const double lead = j == 1 ? normal_cdf(u) : j * smoother(u, j - 1) / std::pow(h, j - 1);
  const double tail = smoother(u, j);
  return lead + (tail == 0.0 ? 0.0 : v / std::pow(h, j) * tail);
}

double rho_corrected(double xi, const LossParams& params) {
  return corrected_terms(xi, params).value;
}

double rho_corrected_derivative(double xi, const LossParams& params) {
  return corrected_terms(xi, params).slope;
}

ObjectiveValue corrected_objective(const Eigen::VectorXd& beta, const FeatureSample& sample,
                                   const LossParams& params) {
  const Eigen::Index n = sample.b_hat.size();
  const Eigen::VectorXd fitted = sample.x * beta;
  ObjectiveValue out;
  out.gradient = Eigen::VectorXd::Zero(beta.size());
  // d xi_i / d beta = -x_i / sqrt(D_i), so the gradient is -X' c with
  // c_i = w_i rho*'(xi_i) / sqrt(D_i).
  Eigen::VectorXd coef(n);
  double value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inv_sd = 1.0 / std::sqrt(sample.d[i]);
    const double w = sample.weighted() ? sample.weights[i] : 1.0;
    const LossTerms t = corrected_terms((sample.b_hat[i] - fitted[i]) * inv_sd, params);
    value += w * t.value;
    coef[i] = w * t.slope * inv_sd;
  }
  out.value = value;
  out.gradient.noalias() = -(sample.x.transpose() * coef);
  return out;
}

double corrected_objective_value(const Eigen::VectorXd& beta, const FeatureSample& sample,
                                 const LossParams& params) {
  const Eigen::VectorXd fitted = sample.x * beta;
  double value = 0.0;
  for (Eigen::Index i = 0; i < sample.b_hat.size(); ++i) {
    const double w = sample.weighted() ? sample.weights[i] : 1.0;
    value += w * corrected_terms((sample.b_hat[i] - fitted[i]) / std::sqrt(sample.d[i]), params).value;
  }
  return value;
}

double check_objective(const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& x, double tau) {
  const Eigen::VectorXd r = b - x * beta;
  double value = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) value += rho_tau(r[i], tau);
  return value;
}

}  // namespace ltqr
