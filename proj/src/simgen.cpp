#include "ltqr/simgen.hpp"

#include <array>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "ltqr/error.hpp"
#include "ltqr/parallel.hpp"

namespace ltqr {

namespace {

constexpr std::uint64_t kSubjectStream = 0x5b1e;

struct CaseTraits {
  SimCase sim_case;
  std::string_view name;
  bool quadratic;
  bool scaled_by_x1;
  ErrorFamily family;  // family assumed when fitting
  bool uniform_errors;
};

constexpr std::array<CaseTraits, 7> kCases{{
    {SimCase::Case1, "case1", false, false, ErrorFamily::Laplace, false},
    {SimCase::Case2, "case2", false, false, ErrorFamily::Normal, false},
    {SimCase::Case3, "case3", false, true, ErrorFamily::Laplace, false},
    {SimCase::Case4, "case4", false, true, ErrorFamily::Normal, false},
    {SimCase::QuadraticLaplace, "quadratic-laplace", true, true, ErrorFamily::Laplace, false},
    {SimCase::QuadraticNormal, "quadratic-normal", true, true, ErrorFamily::Normal, false},
    {SimCase::RobustUniform, "robust-uniform", false, false, ErrorFamily::Laplace, true},
}};

const CaseTraits& traits(SimCase c) {
  for (const auto& t : kCases)
    if (t.sim_case == c) return t;
  throw Error("unknown scenario", "case");
}

std::string subject_id(std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i + 1);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
  return "s" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string_view to_string(SimCase c) noexcept {
  for (const auto& t : kCases)
    if (t.sim_case == c) return t.name;
  return "unknown";
}

SimCase parse_sim_case(std::string_view name) {
  for (const auto& t : kCases)
    if (t.name == name) return t.sim_case;
  throw Error("unknown scenario '" + std::string(name) + "'", "case");
}

Eigen::VectorXd true_beta(const SimScenario& scenario, double tau) {
  const double qe = boost::math::quantile(boost::math::normal(), tau);
  const auto& o = scenario.overrides;
  Eigen::VectorXd beta(3);
  beta << 2.0 + o.noise_intercept * qe, 1.0 + o.noise_x1 * qe, 1.0 + o.noise_x2 * qe;
  return beta;
}

SimulatedData generate(const SimScenario& scenario) {
  if (scenario.n < 1) throw Error("scenario needs at least one subject", "n");
  const CaseTraits& tr = traits(scenario.sim_case);
  const auto& o = scenario.overrides;

  SimulatedData out;
  out.k = tr.quadratic ? 2 : 1;
  out.t_star = tr.quadratic ? o.t_star : 0.0;
  out.family = tr.family;
  out.sigma2 = tr.uniform_errors ? 0.25 * o.error_variance : o.error_variance;

  std::vector<SubjectRecord> subjects(scenario.n);
  out.truth.alpha.resize(scenario.n);
  out.truth.b.resize(scenario.n);
  const double half_width = std::sqrt(3.0) / 2.0 * std::sqrt(o.error_variance);

  for (std::size_t i = 0; i < scenario.n; ++i) {
    CounterRng rng(derive_key(scenario.seed, {kSubjectStream, i}));
    const double x1 = uniform(rng, 0.0, 0.5);
    const double x2 = bernoulli(rng, 0.5) ? 1.0 : 0.0;
    const double e = standard_normal(rng);
    const double latent = 2.0 + x1 + x2 + (o.noise_intercept + o.noise_x1 * x1 + o.noise_x2 * x2) * e;
    // floor(4 + U), U ~ Unif(0, 6); U = 6 has probability zero but maps to 9
    const auto m = std::min<std::size_t>(9, static_cast<std::size_t>(std::floor(4.0 + uniform(rng, 0.0, 6.0))));

    SubjectRecord& s = subjects[i];
    s.id = subject_id(i, scenario.n);
    s.x = Eigen::Vector3d(1.0, x1, x2);
    s.times.resize(m);
    s.y.resize(m);
    double t = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      t += exponential(rng, o.time_rate);
      s.times[j] = t;
    }

    Eigen::VectorXd alpha(out.k + 1);
    if (tr.quadratic) {
      const double a = exponential(rng, o.quadratic_rate);
      const double c = exponential(rng, o.quadratic_rate);
      const double b = latent - 2.0 * c * out.t_star;
      alpha << a, b, c;
      out.truth.b[i] = b + 2.0 * c * out.t_star;
    } else {
      alpha << exponential(rng, o.intercept_rate), latent;
      out.truth.b[i] = latent;
    }
    out.truth.alpha[i] = alpha;

    const double scale = tr.scaled_by_x1 ? 1.0 / (1.0 + x1) : 1.0;
    s.delta = scale * scale;
    for (std::size_t j = 0; j < m; ++j) {
      double eps;
      if (tr.uniform_errors) eps = uniform(rng, -half_width, half_width);
      else if (tr.family == ErrorFamily::Laplace) eps = laplace(rng, 0.0, o.error_variance);
      else eps = normal(rng, 0.0, o.error_variance);
      double trend = 0.0;
      double power = 1.0;
      for (Eigen::Index l = 0; l < alpha.size(); ++l) {
        trend += alpha[l] * power;
        power *= s.times[j];
      }
      s.y[j] = trend + scale * eps;
    }
  }
  out.data = LongitudinalDataset(std::move(subjects), {"x1", "x2"});
  return out;
}

ModelConfig scenario_config(const SimScenario& scenario, std::vector<double> tau_grid, double h) {
  const CaseTraits& tr = traits(scenario.sim_case);
  ModelConfig cfg;
  cfg.k = tr.quadratic ? 2 : 1;
  cfg.t_star = tr.quadratic ? scenario.overrides.t_star : 0.0;
  cfg.error_family = tr.family;
  cfg.tau_grid = std::move(tau_grid);
  cfg.bandwidth = FixedBandwidth{h};
  cfg.seed = scenario.seed;
  return cfg;
}

ReplicationReport run_replication(const SimScenario& scenario, const ModelConfig& config,
                                  const ReplicationOptions& options) {
  if (options.n_reps < 1) throw Error("n_reps must be at least 1", "n_reps");
  config.validate();
  const auto n_reps = static_cast<std::size_t>(options.n_reps);
  const std::size_t n_tau = config.tau_grid.size();

  struct Replicate {
    Eigen::MatrixXd naive, hat, se;
    Eigen::MatrixXd covered;
    bool ok = false;
  };
  std::vector<Replicate> reps(n_reps);

  parallel_for(n_reps, options.workers, [&](std::size_t r) {
    SimScenario sc = scenario;
    sc.seed = derive_key(scenario.seed, {stream::kReplicate, r});
    ModelConfig cfg = config;
    cfg.seed = derive_key(config.seed, {stream::kReplicate, r});
    const SimulatedData sim = generate(sc);

    FitAllOptions fit_opts;
    fit_opts.estimator = options.estimator;
    fit_opts.workers = 1;
    Replicate& rep = reps[r];
    QuantileFitResult fit;
    try {
      fit = fit_all(sim.data, cfg, fit_opts);
    } catch (const Error&) {
      return;
    }
    rep.naive = fit.beta_naive;
    rep.hat = fit.beta_hat;
    rep.ok = fit.all_converged();
    const Eigen::Index p = fit.beta_hat.rows();
    rep.se = Eigen::MatrixXd::Constant(p, static_cast<Eigen::Index>(n_tau), std::nan(""));
    rep.covered = rep.se;
    if (options.n_b > 0) {
      ResampleOptions ro;
      ro.n_b = options.n_b;
      ro.alpha = options.alpha;
      ro.minimize = options.estimator.minimize;
      ro.seed = cfg.seed;
      ro.workers = 1;
      const ResampleDraws draws =
          resample_fit(fit.sample, fit.beta_hat, cfg.tau_grid, fit.h_used, fit.sigma2_used, ro);
      rep.ok = rep.ok && !draws.flagged;
      rep.se = draws.se;
      for (Eigen::Index j = 0; j < p; ++j) {
        for (std::size_t t = 0; t < n_tau; ++t) {
          const auto col = static_cast<Eigen::Index>(t);
          const double truth = true_beta(scenario, cfg.tau_grid[t])[j];
          rep.covered(j, col) =
              (draws.ci_lower(j, col) <= truth && truth <= draws.ci_upper(j, col)) ? 1.0 : 0.0;
        }
      }
    }
  });

  ReplicationReport report;
  report.scenario = scenario;
  report.tau_grid = config.tau_grid;
  report.coefficient_names = {"intercept", "x1", "x2"};
  report.n_reps_requested = options.n_reps;
  for (auto& rep : reps) {
    if (!rep.ok) {
      ++report.n_reps_failed;
      continue;
    }
    report.beta_naive.push_back(std::move(rep.naive));
    report.beta_hat.push_back(std::move(rep.hat));
    report.se.push_back(rep.se);
  }
  report.n_reps_used = static_cast<int>(report.beta_hat.size());
  report.run_failed = report.n_reps_failed > options.max_fail_fraction * options.n_reps ||
                      report.n_reps_used == 0;

  std::vector<Eigen::MatrixXd> covered;
  for (auto& rep : reps)
    if (rep.ok) covered.push_back(rep.covered);

  const std::size_t p = 3;
  report.cells.assign(n_tau, std::vector<ReplicationCell>(p));
  if (report.n_reps_used == 0) return report;
  const double used = report.n_reps_used;
  for (std::size_t t = 0; t < n_tau; ++t) {
    const Eigen::VectorXd truth = true_beta(scenario, config.tau_grid[t]);
    const auto col = static_cast<Eigen::Index>(t);
    for (std::size_t j = 0; j < p; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      std::vector<double> naive, hat;
      double se_sum = 0.0;
      double cover_sum = 0.0;
      for (std::size_t r = 0; r < report.beta_hat.size(); ++r) {
        naive.push_back(report.beta_naive[r](row, col));
        hat.push_back(report.beta_hat[r](row, col));
        se_sum += report.se[r](row, col);
        cover_sum += covered[r](row, col);
      }
      double mean_naive = 0.0;
      double mean_hat = 0.0;
      for (std::size_t r = 0; r < hat.size(); ++r) {
        mean_naive += naive[r];
        mean_hat += hat[r];
      }
      mean_naive /= used;
      mean_hat /= used;
      ReplicationCell& cell = report.cells[t][j];
      cell.truth = truth[row];
      cell.bias_naive = mean_naive - truth[row];
      cell.bias_proposed = mean_hat - truth[row];
      cell.sd_naive = sample_sd(naive, mean_naive);
      cell.sd_proposed = sample_sd(hat, mean_hat);
      cell.mean_se = se_sum / used;
      cell.coverage = cover_sum / used;
    }
  }
  return report;
}

}  // namespace ltqr
