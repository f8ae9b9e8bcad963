#include "ltqr/bandwidth.hpp"

#include <cmath>

#include "ltqr/error.hpp"
#include "ltqr/parallel.hpp"

namespace ltqr {

std::vector<double> default_h_grid() {
  std::vector<double> grid;
  for (int i = 4; i <= 16; ++i) grid.push_back(i / 10.0);
  return grid;
}

double draw_proxy_noise(CounterRng& rng, ErrorFamily family, double variance) {
  if (variance <= 0.0) return 0.0;
  return family == ErrorFamily::Laplace ? laplace(rng, 0.0, variance) : normal(rng, 0.0, variance);
}

double mean_mahalanobis(const Eigen::MatrixXd& deviations, bool* ridge_applied) {
  if (ridge_applied) *ridge_applied = false;
  const Eigen::Index n_c = deviations.rows();
  const Eigen::Index p = deviations.cols();
  if (n_c < 2) throw Error("at least two replicates are required", "n_c");
  if (deviations.isZero(0.0)) return 0.0;

  const Eigen::RowVectorXd mean = deviations.colwise().mean();
  const Eigen::MatrixXd centered = deviations.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n_c - 1);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const auto diag = ldlt.vectorD();
  const double dmax = diag.cwiseAbs().maxCoeff();
  const bool singular = ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-12 * dmax);
  if (singular) {
    const double trace = cov.trace();
    const double ridge = trace > 0.0 ? 1e-10 * trace / static_cast<double>(p) : 1.0;
    cov.diagonal().array() += ridge;
    ldlt.compute(cov);
    if (ridge_applied) *ridge_applied = true;
  }
  double total = 0.0;
  for (Eigen::Index c = 0; c < n_c; ++c) {
    const Eigen::VectorXd dev = deviations.row(c).transpose();
    total += dev.dot(ldlt.solve(dev));
  }
  return total / static_cast<double>(n_c);
}

double extrapolate_bandwidth(double h1, double h2) {
  if (!(h1 > 0.0 && h2 > 0.0)) throw Error("bandwidths must be positive", "h");
  return h1 * (h1 / h2);
}

BandwidthSearch select_bandwidth(const FeatureSample& sample, double tau, double sigma2,
                                 const BandwidthOptions& options) {
  const auto& grid = options.h_grid;
  if (grid.empty()) throw Error("bandwidth grid is empty", "h_grid");
  if (grid.size() < 2) throw Error("bandwidth grid needs at least two candidates", "h_grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw Error("h grid values must be positive", "h_grid");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("h grid must be increasing", "h_grid");
  }
  if (options.n_c < 2) throw Error("n_c must be at least 2", "n_c");
  if (!(sigma2 >= 0.0)) throw Error("sigma2 must be nonnegative", "sigma2");

  const std::size_t n_h = grid.size();
  const auto n_c = static_cast<std::size_t>(options.n_c);
  const int p = sample.p();
  const Eigen::Index n = sample.b_hat.size();
  const double noise_var = sigma2 * options.noise_scale;

  // Every refit uses the same jitter stream, so identical inputs give
  // identical fits and zero injected noise gives exactly zero deviations.
  const std::uint64_t fit_key = derive_key(options.seed, {stream::kBandwidth, 0});

  std::vector<QuantileFit> base(n_h);
  parallel_for(n_h, options.workers, [&](std::size_t k) {
    base[k] = fit_quantile(sample, {tau, grid[k], sigma2}, options.estimator, fit_key);
  });

  std::vector<QuantileFit> single(n_h * n_c);
  std::vector<QuantileFit> twice(n_h * n_c);
  parallel_for(n_h * n_c, options.workers, [&](std::size_t task) {
    const std::size_t k = task / n_c;
    const std::size_t c = task % n_c;
    CounterRng rng(derive_key(options.seed, {stream::kBandwidth, 1, k, c}));
    FeatureSample once = sample;
    FeatureSample again = sample;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double var = noise_var * sample.d[i];
      once.b_hat[i] = sample.b_hat[i] + draw_proxy_noise(rng, options.family, var);
      again.b_hat[i] = once.b_hat[i] + draw_proxy_noise(rng, options.family, var);
    }
    const LossParams loss{tau, grid[k], sigma2};
    single[task] = fit_quantile(once, loss, options.estimator, fit_key);
    twice[task] = fit_quantile(again, loss, options.estimator, fit_key);
  });

  BandwidthSearch out;
  out.h_grid = grid;
  out.n_c = options.n_c;
  out.tau = tau;
  out.m1_curve.assign(n_h, 0.0);
  out.m2_curve.assign(n_h, 0.0);
  out.disqualified.assign(n_h, false);
  out.ridge_applied.assign(n_h, false);

  for (std::size_t k = 0; k < n_h; ++k) {
    bool ok = base[k].diagnostics.converged;
    Eigen::MatrixXd dev1(static_cast<Eigen::Index>(n_c), p);
    Eigen::MatrixXd dev2(static_cast<Eigen::Index>(n_c), p);
    for (std::size_t c = 0; c < n_c; ++c) {
      const auto& s = single[k * n_c + c];
      const auto& t = twice[k * n_c + c];
      ok = ok && s.diagnostics.converged && t.diagnostics.converged;
      dev1.row(static_cast<Eigen::Index>(c)) = (s.beta - base[k].beta).transpose();
      dev2.row(static_cast<Eigen::Index>(c)) = (t.beta - s.beta).transpose();
    }
    if (!ok) {
      out.disqualified[k] = true;
      continue;
    }
    bool ridge1 = false;
    bool ridge2 = false;
    out.m1_curve[k] = mean_mahalanobis(dev1, &ridge1);
    out.m2_curve[k] = mean_mahalanobis(dev2, &ridge2);
    out.ridge_applied[k] = ridge1 || ridge2;
  }

  // Grid is increasing, so strict comparison breaks ties toward smaller h.
  auto argmin = [&](const std::vector<double>& curve) {
    std::size_t best = n_h;
    for (std::size_t k = 0; k < n_h; ++k) {
      if (out.disqualified[k]) continue;
      if (best == n_h || curve[k] < curve[best]) best = k;
    }
    if (best == n_h) throw Error("every bandwidth candidate failed to converge", "h_grid");
    return best;
  };
  out.h1 = grid[argmin(out.m1_curve)];
  out.h2 = grid[argmin(out.m2_curve)];
  out.selected = extrapolate_bandwidth(out.h1, out.h2);
  return out;
}

}  // namespace ltqr
