#include "ltqr/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ltqr/bandwidth.hpp"
#include "ltqr/error.hpp"
#include "ltqr/rng.hpp"

namespace ltqr {

namespace {

constexpr double kIrlsEpsilon = 1e-8;
constexpr int kIrlsMaxIter = 200;

bool is_intercept_only(const Eigen::MatrixXd& x) {
  return x.cols() == 1 && (x.array() == 1.0).all();
}

// Hunter-Lange majorize-minimize iterations on the epsilon-perturbed check
// loss; each step is a weighted least-squares solve.
Eigen::VectorXd irls_start(const Eigen::VectorXd& b, const Eigen::MatrixXd& x, double tau) {
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd linear = (2.0 * tau - 1.0) * x.colwise().sum().transpose();
  double prev = check_objective(beta, b, x, tau);
  for (int it = 0; it < kIrlsMaxIter; ++it) {
    const Eigen::VectorXd r = b - x * beta;
    const Eigen::VectorXd w = (r.array().abs() + kIrlsEpsilon).inverse();
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd rhs = x.transpose() * w.cwiseProduct(b) + linear;
    Eigen::VectorXd next = xtwx.ldlt().solve(rhs);
    if (!next.allFinite()) break;
    const double obj = check_objective(next, b, x, tau);
    beta = std::move(next);
    if (std::abs(prev - obj) <= 1e-13 * (1.0 + std::abs(obj))) break;
    prev = obj;
  }
  return beta;
}

// Basis of p rows with small |residual| and full rank, chosen greedily.
std::vector<Eigen::Index> initial_basis(const Eigen::VectorXd& r, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index c) { return std::abs(r[a]) < std::abs(r[c]); });
  std::vector<Eigen::Index> basis;
  Eigen::MatrixXd rows(0, p);
  for (Eigen::Index i : order) {
    Eigen::MatrixXd trial(rows.rows() + 1, p);
    trial << rows, x.row(i);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
    lu.setThreshold(1e-10);
    if (lu.rank() == trial.rows()) {
      rows = std::move(trial);
      basis.push_back(i);
      if (static_cast<Eigen::Index>(basis.size()) == p) break;
    }
  }
  return basis;
}

// Exact descent over basic (exact-fit) solutions: from the current vertex,
// try releasing each basis row in either direction; follow the steepest
// descending edge to the minimizing breakpoint (a weighted-median step).
Eigen::VectorXd vertex_descent(const Eigen::VectorXd& b, const Eigen::MatrixXd& x, double tau,
                               std::vector<Eigen::Index> basis) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  const double zero_tol = 1e-12 * scale;

  auto solve_basis = [&](const std::vector<Eigen::Index>& idx, Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    Eigen::MatrixXd xb(p, p);
    Eigen::VectorXd bb(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      xb.row(k) = x.row(idx[static_cast<std::size_t>(k)]);
      bb[k] = b[idx[static_cast<std::size_t>(k)]];
    }
    lu.compute(xb);
    return Eigen::VectorXd(lu.solve(bb));
  };

  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  Eigen::VectorXd beta = solve_basis(basis, lu);
  std::vector<std::pair<double, Eigen::Index>> breaks;
  breaks.reserve(static_cast<std::size_t>(n));

  const int max_pivots = static_cast<int>(10 * n + 100);
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    const Eigen::VectorXd r = b - x * beta;
    double best_slope = 0.0;
    Eigen::VectorXd best_dir;
    Eigen::Index best_leave = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(p, j);
      const Eigen::VectorXd base_dir = lu.solve(e);
      for (double sign : {1.0, -1.0}) {
        const Eigen::VectorXd dir = sign * base_dir;
        const Eigen::VectorXd a = x * dir;
        double slope = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (r[i] > zero_tol) slope -= tau * a[i];
          else if (r[i] < -zero_tol) slope += (1.0 - tau) * a[i];
          else slope += a[i] > 0.0 ? (1.0 - tau) * a[i] : -tau * a[i];
        }
        if (slope < best_slope - 1e-12 * scale) {
          best_slope = slope;
          best_dir = dir;
          best_leave = j;
        }
      }
    }
    if (best_leave < 0) break;  // no descending edge: optimal vertex

    const Eigen::VectorXd a = x * best_dir;
    breaks.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(r[i]) <= zero_tol || a[i] == 0.0) continue;
      const double s = r[i] / a[i];
      if (s > 0.0) breaks.emplace_back(s, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best_slope;
    Eigen::Index enter = -1;
    for (const auto& [s, i] : breaks) {
      slope += std::abs(a[i]);
      if (slope >= 0.0) {
        enter = i;
        break;
      }
    }
    if (enter < 0) break;

    std::vector<Eigen::Index> next = basis;
    next[static_cast<std::size_t>(best_leave)] = enter;
    Eigen::PartialPivLU<Eigen::MatrixXd> next_lu;
    Eigen::VectorXd next_beta = solve_basis(next, next_lu);
    if (!next_beta.allFinite() ||
        check_objective(next_beta, b, x, tau) > check_objective(beta, b, x, tau)) {
      break;
    }
    basis = std::move(next);
    lu = std::move(next_lu);
    beta = std::move(next_beta);
  }
  return beta;
}

double jitter_sd(const Eigen::VectorXd& naive, double scale) {
  const double norm = naive.norm();
  return scale * (norm > 0.0 ? norm : 1.0);
}

bool better(const QuantileFit& cand, const QuantileFit& best) {
  if (cand.diagnostics.converged != best.diagnostics.converged) return cand.diagnostics.converged;
  return cand.diagnostics.objective < best.diagnostics.objective;
}

}  // namespace

Eigen::VectorXd naive_qr(const Eigen::VectorXd& b, const Eigen::MatrixXd& x, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error("tau must lie in (0, 1)", "tau");
  if (b.size() != x.rows()) throw Error("response and design differ in length", "x");
  if (x.rows() < x.cols()) throw Error("rank-deficient design", "x");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) throw Error("rank-deficient design", "x");
  }

  if (is_intercept_only(x)) {
    std::vector<double> sorted(b.data(), b.data() + b.size());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    auto idx = static_cast<std::size_t>(std::ceil(n * tau - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, sorted.size());
    return Eigen::VectorXd::Constant(1, sorted[idx - 1]);
  }

  const Eigen::VectorXd start = irls_start(b, x, tau);
  const Eigen::VectorXd r = b - x * start;
  const auto basis = initial_basis(r, x);
  if (static_cast<Eigen::Index>(basis.size()) < x.cols()) return start;
  Eigen::VectorXd polished = vertex_descent(b, x, tau, basis);
  if (check_objective(polished, b, x, tau) <= check_objective(start, b, x, tau)) return polished;
  return start;
}

QuantileFit minimize_corrected(const FeatureSample& sample, const LossParams& loss,
                               const Eigen::VectorXd& start, const MinimizeOptions& options) {
  const ValueAndGradient fg = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& grad) {
    ObjectiveValue ov = corrected_objective(beta, sample, loss);
    grad = std::move(ov.gradient);
    return ov.value;
  };
  MinimizeResult res = minimize_bfgs(fg, start, options);
  QuantileFit fit;
  fit.beta = std::move(res.x);
  auto& d = fit.diagnostics;
  d.converged = res.converged && fit.beta.allFinite();
  d.iterations = res.iterations;
  d.evaluations = res.evaluations;
  d.grad_norm = res.grad_norm;
  d.objective_start = res.f_start;
  d.objective = res.f;
  d.starts = 1;
  d.converged_starts = d.converged ? 1 : 0;
  d.message = std::move(res.message);
  return fit;
}

QuantileFit fit_quantile(const FeatureSample& sample, const LossParams& loss,
                         const EstimatorOptions& options, std::uint64_t jitter_key,
                         const Eigen::VectorXd* warm_start, const Eigen::VectorXd* naive_start) {
  loss.validate();
  const Eigen::VectorXd naive = naive_start ? *naive_start : naive_qr(sample.b_hat, sample.x, loss.tau);

  std::vector<Eigen::VectorXd> starts{naive};
  if (warm_start && warm_start->size() == naive.size()) starts.push_back(*warm_start);
  const double sd = jitter_sd(naive, options.jitter_scale);
  for (int r = 0; r < options.n_restarts; ++r) {
    CounterRng rng(derive_key(jitter_key, {static_cast<std::uint64_t>(r)}));
    Eigen::VectorXd s = naive;
    for (Eigen::Index j = 0; j < s.size(); ++j) s[j] += sd * standard_normal(rng);
    starts.push_back(std::move(s));
  }

  QuantileFit best;
  int converged_starts = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    QuantileFit cand = minimize_corrected(sample, loss, starts[k], options.minimize);
    converged_starts += cand.diagnostics.converged ? 1 : 0;
    if (k == 0 || better(cand, best)) best = std::move(cand);
  }
  best.diagnostics.starts = static_cast<int>(starts.size());
  best.diagnostics.converged_starts = converged_starts;
  best.diagnostics.objective_start = corrected_objective_value(naive, sample, loss);
  return best;
}

bool QuantileFitResult::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

QuantileFitResult fit_all(const LongitudinalDataset& data, const ModelConfig& config,
                          const FitAllOptions& options) {
  config.validate();
  QuantileFitResult out;
  out.data = data.canonical();
  out.tau_grid = config.tau_grid;
  out.coefficient_names = out.data.coefficient_names();
  out.stage1 = fit_stage_one(out.data, config, options.workers);
  out.sample = make_feature_sample(out.data, out.stage1);
  out.sigma2_used = options.known_sigma2 ? *options.known_sigma2 : out.stage1.sigma2_hat;

  const std::size_t n_tau = config.tau_grid.size();
  const int p = out.data.p();
  if (out.sample.n() <= static_cast<std::size_t>(p))
    throw Error("fewer included subjects than coefficients", "subjects");

  if (const auto* fixed = std::get_if<FixedBandwidth>(&config.bandwidth)) {
    out.h_used = fixed->h;
  } else {
    const auto& policy = std::get<AutoBandwidth>(config.bandwidth);
    BandwidthOptions bw;
    bw.h_grid = policy.grid;
    bw.n_c = policy.n_c;
    bw.family = config.error_family;
    bw.estimator = options.estimator;
    bw.seed = config.seed;
    bw.workers = options.workers;
    const double tau_mid = config.tau_grid[n_tau / 2];
    auto search = std::make_shared<BandwidthSearch>(
        select_bandwidth(out.sample, tau_mid, out.sigma2_used, bw));
    out.h_used = search->selected;
    out.bandwidth_search = std::move(search);
  }

  out.beta_naive.resize(p, static_cast<Eigen::Index>(n_tau));
  out.beta_hat.resize(p, static_cast<Eigen::Index>(n_tau));
  out.converged.assign(n_tau, false);
  out.objective_at_opt.assign(n_tau, 0.0);
  out.diagnostics.resize(n_tau);

  std::optional<Eigen::VectorXd> previous;
  for (std::size_t step = 0; step < n_tau; ++step) {
    const std::size_t t = options.reverse_sweep ? n_tau - 1 - step : step;
    const LossParams loss{config.tau_grid[t], out.h_used, out.sigma2_used};
    const Eigen::VectorXd naive = naive_qr(out.sample.b_hat, out.sample.x, loss.tau);
    const std::uint64_t key = derive_key(config.seed, {stream::kJitter, t});
    QuantileFit fit = fit_quantile(out.sample, loss, options.estimator, key,
                                   previous ? &*previous : nullptr, &naive);
    const auto col = static_cast<Eigen::Index>(t);
    out.beta_naive.col(col) = naive;
    out.beta_hat.col(col) = fit.beta;
    out.converged[t] = fit.diagnostics.converged;
    out.objective_at_opt[t] = fit.diagnostics.objective;
    out.diagnostics[t] = fit.diagnostics;
    previous = fit.beta;
  }
  return out;
}

}  // namespace ltqr
