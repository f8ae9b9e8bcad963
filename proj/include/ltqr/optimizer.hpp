#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace ltqr {

/// Returns f(x) and writes the gradient into the second argument.
using ValueAndGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct MinimizeOptions {
  int max_iter = 500;
  double grad_tol = 1e-8;   // stop when |g| < grad_tol * (1 + |f|)
  double step_tol = 1e-12;  // stop when |dx| < step_tol * (1 + |x|)
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double f_start = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// BFGS with a strong-Wolfe line search.
MinimizeResult minimize_bfgs(const ValueAndGradient& fg, Eigen::VectorXd x0,
                             const MinimizeOptions& options = {});

}  // namespace ltqr
