#include "ltqr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltqr {

namespace {

struct LinePoint {
  double alpha;
  double f;
  double slope;  // directional derivative
};

struct LineSearchResult {
  bool ok = false;
  double alpha = 0.0;
  double f = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

// Minimizer of the cubic interpolating (a, b); falls back to bisection.
double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  const double mid = 0.5 * (a.alpha + b.alpha);
  if (!(disc >= 0.0)) return mid;
  const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (denom == 0.0) return mid;
  const double t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return mid;
  return t;
}

class StrongWolfe {
 public:
  StrongWolfe(const ValueAndGradient& fg, const Eigen::VectorXd& x, const Eigen::VectorXd& dir,
              double f0, double slope0, int& evaluations)
      : fg_(fg), x_(x), dir_(dir), f0_(f0), slope0_(slope0), evals_(evaluations) {}

  LineSearchResult search(double alpha_init) {
    LinePoint prev{0.0, f0_, slope0_};
    double alpha = alpha_init;
    for (int i = 0; i < kMaxBracket; ++i) {
      LinePoint cur = evaluate(alpha);
      if (approx_wolfe(cur)) return accept(cur);
      if (!std::isfinite(cur.f) || cur.f > f0_ + kC1 * alpha * slope0_ || (i > 0 && cur.f >= prev.f))
        return zoom(prev, cur);
      if (std::abs(cur.slope) <= -kC2 * slope0_) return accept(cur);
      if (cur.slope >= 0.0) return zoom(cur, prev);
      prev = cur;
      alpha *= 2.0;
    }
    return {};
  }

 private:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;
  static constexpr int kMaxBracket = 40;
  static constexpr int kMaxZoom = 60;
  static constexpr double kNoise = 1e-10;

  // Near the optimum decreases in f drop below rounding noise; accept points
  // that satisfy the curvature condition and do not raise f beyond that noise.
  bool approx_wolfe(const LinePoint& p) const {
    return std::isfinite(p.f) && p.f <= f0_ + kNoise * (1.0 + std::abs(f0_)) &&
           std::abs(p.slope) <= -kC2 * slope0_;
  }

  LinePoint evaluate(double alpha) {
    last_x_ = x_ + alpha * dir_;
    last_f_ = fg_(last_x_, last_g_);
    ++evals_;
    last_alpha_ = alpha;
    return {alpha, last_f_, std::isfinite(last_f_) ? last_g_.dot(dir_) : 0.0};
  }

  LineSearchResult accept(const LinePoint& p) {
    if (p.alpha != last_alpha_) evaluate(p.alpha);
    return {true, p.alpha, last_f_, last_x_, last_g_};
  }

  LineSearchResult zoom(LinePoint lo, LinePoint hi) {
    for (int i = 0; i < kMaxZoom; ++i) {
      if (!std::isfinite(hi.f)) {
        hi = evaluate(0.5 * (lo.alpha + hi.alpha));
        continue;
      }
      const double alpha = cubic_step(lo, hi);
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
      LinePoint cur = evaluate(alpha);
      if (approx_wolfe(cur)) return accept(cur);
      if (!std::isfinite(cur.f) || cur.f > f0_ + kC1 * alpha * slope0_ || cur.f >= lo.f) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -kC2 * slope0_) return accept(cur);
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    // Sufficient decrease without curvature is still progress.
    if (lo.alpha > 0.0 && lo.f < f0_) return accept(lo);
    return {};
  }

  const ValueAndGradient& fg_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  double f0_;
  double slope0_;
  int& evals_;
  Eigen::VectorXd last_x_;
  Eigen::VectorXd last_g_;
  double last_f_ = 0.0;
  double last_alpha_ = -1.0;
};

}  // namespace

MinimizeResult minimize_bfgs(const ValueAndGradient& fg, Eigen::VectorXd x0,
                             const MinimizeOptions& options) {
  const Eigen::Index dim = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(dim);
  res.f = fg(res.x, g);
  res.f_start = res.f;
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite()) {
    res.message = "non-finite objective at start";
    res.grad_norm = std::numeric_limits<double>::infinity();
    return res;
  }

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  bool restarted = false;
  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm < options.grad_tol * (1.0 + std::abs(res.f))) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    Eigen::VectorXd dir = -hinv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / res.grad_norm);

    StrongWolfe ls(fg, res.x, dir, res.f, slope, res.evaluations);
    LineSearchResult step = ls.search(alpha0);
    if (!step.ok) {
      if (!restarted) {
        // Retry once along steepest descent with a fresh curvature model.
        hinv.setIdentity();
        scaled = false;
        restarted = true;
        continue;
      }
      res.message = "line search failed";
      return res;
    }
    restarted = false;

    const Eigen::VectorXd s = step.x - res.x;
    const Eigen::VectorXd y = step.g - g;
    res.x = step.x;
    res.f = step.f;
    g = step.g;

    if (s.norm() < options.step_tol * (1.0 + res.x.norm())) {
      res.grad_norm = g.norm();
      res.converged = true;
      res.message = "step tolerance reached";
      return res;
    }

    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = hinv * y;
      const double yhy = y.dot(hy);
      hinv += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  res.grad_norm = g.norm();
  res.converged = res.grad_norm < options.grad_tol * (1.0 + std::abs(res.f));
  res.message = res.converged ? "gradient tolerance reached" : "maximum iterations reached";
  return res;
}

}  // namespace ltqr
