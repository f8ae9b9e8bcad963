#include "ltqr/inference.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "ltqr/error.hpp"
#include "ltqr/parallel.hpp"
#include "ltqr/rng.hpp"

namespace ltqr {

namespace {

constexpr double kGridTol = 1e-9;

struct WindowSpan {
  std::size_t first;
  std::size_t last;  // inclusive
};

WindowSpan window_span(std::span<const double> taus, double lo, double hi) {
  if (taus.empty()) throw Error("empty tau grid", "tau_grid");
  if (!(hi > lo)) throw Error("tau window must have lo < hi", "tau_window");
  if (lo < taus.front() - kGridTol || hi > taus.back() + kGridTol)
    throw Error("tau window extends beyond the grid", "tau_window");
  std::size_t first = taus.size();
  std::size_t last = 0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (taus[i] >= lo - kGridTol && taus[i] <= hi + kGridTol) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == taus.size() || last < first + 2)
    throw Error("tau window narrower than 2 grid steps", "tau_window");
  return {first, last};
}

template <typename Fn>
double trapezoid(std::span<const double> taus, WindowSpan w, Fn&& integrand) {
  double total = 0.0;
  for (std::size_t i = w.first; i < w.last; ++i) {
    total += 0.5 * (taus[i + 1] - taus[i]) * (integrand(i) + integrand(i + 1));
  }
  return total;
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double empirical_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error("no values for quantile", "values");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double resampled_sigma2(const FeatureSample& sample, const Eigen::VectorXd& weights) {
  const double n = static_cast<double>(sample.n());
  double n_obs = 0.0;
  for (std::size_t mi : sample.m) n_obs += static_cast<double>(mi);
  const double dof = n_obs - static_cast<double>(sample.q) * n;
  if (!(dof > 0.0)) throw Error("insufficient residual degrees of freedom", "sigma2");
  return (weights.dot(sample.rss) / dof) / (weights.sum() / n);
}

void summarize_draws(ResampleDraws& draws) {
  const int p = draws.p();
  const auto n_tau = static_cast<Eigen::Index>(draws.tau_grid.size());
  draws.se.setZero(p, n_tau);
  draws.ci_lower.resize(p, n_tau);
  draws.ci_upper.resize(p, n_tau);
  draws.pct_lower.resize(p, n_tau);
  draws.pct_upper.resize(p, n_tau);
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - draws.alpha / 2.0);
  std::vector<double> vals(draws.beta_star.size());
  for (int j = 0; j < p; ++j) {
    for (Eigen::Index t = 0; t < n_tau; ++t) {
      for (std::size_t r = 0; r < draws.beta_star.size(); ++r) vals[r] = draws.beta_star[r](j, t);
      const double se = sample_sd(vals);
      draws.se(j, t) = se;
      draws.ci_lower(j, t) = draws.beta_hat(j, t) - z * se;
      draws.ci_upper(j, t) = draws.beta_hat(j, t) + z * se;
      if (vals.empty()) {
        draws.pct_lower(j, t) = draws.pct_upper(j, t) = draws.beta_hat(j, t);
      } else {
        draws.pct_lower(j, t) = empirical_quantile(vals, draws.alpha / 2.0);
        draws.pct_upper(j, t) = empirical_quantile(vals, 1.0 - draws.alpha / 2.0);
      }
    }
  }
}

ResampleDraws resample_fit(const FeatureSample& sample, const Eigen::MatrixXd& beta_hat,
                           std::span<const double> tau_grid, double h, double sigma2_hat,
                           const ResampleOptions& options) {
  if (options.n_b < 2) throw Error("n_b must be at least 2", "n_b");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw Error("alpha must lie in (0, 1)", "alpha");
  if (beta_hat.cols() != static_cast<Eigen::Index>(tau_grid.size()) || beta_hat.rows() != sample.p())
    throw Error("beta_hat dimensions do not match the grid", "beta_hat");

  const auto n_b = static_cast<std::size_t>(options.n_b);
  const Eigen::Index n = sample.b_hat.size();
  const auto n_tau = static_cast<Eigen::Index>(tau_grid.size());

  struct Replicate {
    Eigen::MatrixXd beta;
    double sigma2 = 0.0;
    bool ok = true;
  };
  std::vector<Replicate> reps(n_b);
  parallel_for(n_b, options.workers, [&](std::size_t r) {
    FeatureSample weighted = sample;
    weighted.weights.resize(n);
    if (options.unit_weights) {
      weighted.weights.setOnes();
    } else {
      CounterRng rng(derive_key(options.seed, {stream::kResample, r}));
      for (Eigen::Index i = 0; i < n; ++i) weighted.weights[i] = exponential(rng, 1.0);
    }
    Replicate& rep = reps[r];
    rep.sigma2 = options.known_sigma2 ? *options.known_sigma2
                 : options.unit_weights ? sigma2_hat
                                        : resampled_sigma2(sample, weighted.weights);
    rep.beta.resize(sample.p(), n_tau);
    for (Eigen::Index t = 0; t < n_tau; ++t) {
      const LossParams loss{tau_grid[static_cast<std::size_t>(t)], h, rep.sigma2};
      const Eigen::VectorXd start = beta_hat.col(t);
      QuantileFit fit = minimize_corrected(weighted, loss, start, options.minimize);
      rep.ok = rep.ok && fit.diagnostics.converged;
      rep.beta.col(t) = fit.beta;
    }
  });

  ResampleDraws out;
  out.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  out.n_b_requested = options.n_b;
  out.alpha = options.alpha;
  out.h = h;
  out.seed = options.seed;
  out.beta_hat = beta_hat;
  for (auto& rep : reps) {
    if (!rep.ok) {
      ++out.n_b_dropped;
      continue;
    }
    out.beta_star.push_back(std::move(rep.beta));
    out.sigma2_star.push_back(rep.sigma2);
  }
  out.n_b_used = static_cast<int>(out.beta_star.size());
  out.flagged = out.n_b_dropped > options.max_drop_fraction * options.n_b;
  summarize_draws(out);
  return out;
}

double window_average(std::span<const double> taus, std::span<const double> values, double lo,
                      double hi) {
  if (taus.size() != values.size()) throw Error("grid and values differ in length", "values");
  const WindowSpan w = window_span(taus, lo, hi);
  // Integrate deviations from the first value so a constant row is returned exactly.
  const double ref = values[w.first];
  const double integral = trapezoid(taus, w, [&](std::size_t i) { return values[i] - ref; });
  return ref + integral / (taus[w.last] - taus[w.first]);
}

double constancy_functional(std::span<const double> taus, std::span<const double> values,
                            double lo, double hi) {
  const double mean = window_average(taus, values, lo, hi);
  const WindowSpan w = window_span(taus, lo, hi);
  const double mid = 0.5 * (lo + hi);
  return trapezoid(taus, w, [&](std::size_t i) {
    return taus[i] > mid ? values[i] - mean : 0.0;
  });
}

ConstancyTestResult constancy_test(const ResampleDraws& draws, int j, double tau_lo,
                                   double tau_hi, double alpha) {
  if (j < 0 || j >= draws.p()) throw Error("coefficient index out of range", "coefficient");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)", "alpha");
  if (draws.beta_star.size() < 2) throw Error("at least two resampling draws are required", "draws");

  const auto n_tau = static_cast<std::size_t>(draws.beta_hat.cols());
  std::vector<double> point(n_tau);
  for (std::size_t t = 0; t < n_tau; ++t) point[t] = draws.beta_hat(j, static_cast<Eigen::Index>(t));

  ConstancyTestResult out;
  out.coefficient = j;
  out.tau_lo = tau_lo;
  out.tau_hi = tau_hi;
  out.alpha = alpha;
  out.statistic = constancy_functional(draws.tau_grid, point, tau_lo, tau_hi);

  std::vector<double> centered(n_tau);
  std::vector<double> null_stats;
  null_stats.reserve(draws.beta_star.size());
  for (const auto& rep : draws.beta_star) {
    for (std::size_t t = 0; t < n_tau; ++t)
      centered[t] = rep(j, static_cast<Eigen::Index>(t)) - point[t];
    null_stats.push_back(constancy_functional(draws.tau_grid, centered, tau_lo, tau_hi));
  }
  out.lower = empirical_quantile(null_stats, alpha / 2.0);
  out.upper = empirical_quantile(null_stats, 1.0 - alpha / 2.0);
  if (!(out.lower < out.upper)) throw Error("degenerate resampling distribution", "draws");
  out.reject = out.statistic < out.lower || out.statistic > out.upper;
  return out;
}

AverageEffect average_effect(const ResampleDraws& draws, double tau_lo, double tau_hi) {
  const int p = draws.p();
  const auto n_tau = static_cast<std::size_t>(draws.beta_hat.cols());
  AverageEffect out;
  out.estimate.resize(p);
  out.se.resize(p);
  std::vector<double> row(n_tau);
  std::vector<double> vals;
  double max_pointwise = 0.0;
  for (int j = 0; j < p; ++j) {
    for (std::size_t t = 0; t < n_tau; ++t) row[t] = draws.beta_hat(j, static_cast<Eigen::Index>(t));
    out.estimate[j] = window_average(draws.tau_grid, row, tau_lo, tau_hi);
    vals.clear();
    for (const auto& rep : draws.beta_star) {
      for (std::size_t t = 0; t < n_tau; ++t) row[t] = rep(j, static_cast<Eigen::Index>(t));
      vals.push_back(window_average(draws.tau_grid, row, tau_lo, tau_hi));
    }
    out.se[j] = sample_sd(vals);

    max_pointwise = 0.0;
    for (std::size_t t = 0; t < n_tau; ++t) {
      const double tau = draws.tau_grid[t];
      if (draws.se.size() != 0 && tau >= tau_lo - kGridTol && tau <= tau_hi + kGridTol)
        max_pointwise = std::max(max_pointwise, draws.se(j, static_cast<Eigen::Index>(t)));
    }
    if (out.se[j] > max_pointwise * (1.0 + 1e-12)) out.se_exceeds_pointwise = true;
  }
  return out;
}

}  // namespace ltqr
