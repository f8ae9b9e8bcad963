#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ltqr/model_core.hpp"
#include "ltqr/rng.hpp"

namespace ltqr::testing {

inline SubjectRecord subject(std::string id, std::vector<double> times, std::vector<double> y,
                             std::vector<double> covariates = {}, double delta = 1.0) {
  SubjectRecord s;
  s.id = std::move(id);
  s.times = std::move(times);
  s.y = std::move(y);
  s.x.resize(static_cast<Eigen::Index>(covariates.size()) + 1);
  s.x[0] = 1.0;
  for (std::size_t j = 0; j < covariates.size(); ++j) s.x[static_cast<Eigen::Index>(j) + 1] = covariates[j];
  s.delta = delta;
  return s;
}

/// Stage-2 sample built directly from proxies and covariates.
inline FeatureSample make_sample(const Eigen::VectorXd& b, const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& d, int q = 2) {
  FeatureSample s;
  s.b_hat = b;
  s.x = x;
  s.d = d;
  s.rss = Eigen::VectorXd::Zero(b.size());
  s.m.assign(static_cast<std::size_t>(b.size()), static_cast<std::size_t>(q) + 2);
  s.q = q;
  return s;
}

/// Random stage-2 instance: intercept plus (p - 1) uniform covariates.
inline FeatureSample random_sample(CounterRng& rng, int n, int p) {
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd b(n), d(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = uniform(rng, -1.0, 2.0);
    b[i] = x.row(i).sum() + 2.0 * standard_normal(rng);
    d[i] = uniform(rng, 0.2, 1.5);
  }
  return make_sample(b, x, d);
}

/// Central difference of a scalar function.
inline double central_difference(const std::function<double(double)>& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double a : v) ss += (a - m) * (a - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace ltqr::testing
