#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltqr/bandwidth.hpp"
#include "ltqr/error.hpp"
#include "ltqr/estimator.hpp"
#include "ltqr/inference.hpp"
#include "ltqr/io.hpp"
#include "ltqr/simgen.hpp"

namespace ltqr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config_path;
  std::string input;
  std::string covariates;
  std::string output;
  std::string format = "csv";
  int k = 1;
  double t_star = 0.0;
  std::string error_family = "laplace";
  std::string tau_grid = "0.1:0.9:0.1";
  double h = 0.8;
  std::string h_grid;
  int n_c = 20;
  int n_b = 200;
  double alpha = 0.05;
  std::optional<double> sigma2;
  std::uint64_t seed = 1;
  int workers = 0;

  // simulate / bench
  std::string sim_case = "case1";
  std::size_t n = 500;
  int reps = 100;
  std::string bench_tau_grid = "0.1,0.5,0.9";
  double intercept_rate = 0.8;
  double time_rate = 0.8;
  double quadratic_rate = 0.15;
  double error_variance = 1.0;

  // test-constancy / select-h
  std::string draws;
  std::string tau_window;
  std::vector<std::string> coefs;
  double tau = 0.5;
};

ErrorFamily parse_family(const std::string& name) {
  if (name == "laplace") return ErrorFamily::Laplace;
  if (name == "normal") return ErrorFamily::Normal;
  throw Error("unknown error family '" + name + "' (expected laplace or normal)", "error-family");
}

const char* family_name(ErrorFamily f) { return f == ErrorFamily::Laplace ? "laplace" : "normal"; }

std::string extension(io::Format f) { return f == io::Format::Csv ? ".csv" : ".json"; }

std::string num(double v) { return io::format_double(v); }

fs::path prepare_output(const Options& o) {
  if (o.output.empty()) throw Error("--output directory is required", "output");
  const fs::path dir(o.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + o.output, "output");
  return dir;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string(), "output");
  out << j.dump(2) << '\n';
}

ModelConfig model_config(const Options& o) {
  ModelConfig cfg;
  cfg.k = o.k;
  cfg.t_star = o.t_star;
  cfg.error_family = parse_family(o.error_family);
  cfg.tau_grid = io::parse_grid(o.tau_grid, "tau-grid");
  if (!o.h_grid.empty())
    cfg.bandwidth = AutoBandwidth{io::parse_grid(o.h_grid, "h-grid"), o.n_c};
  else
    cfg.bandwidth = FixedBandwidth{o.h};
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

json config_echo(const Options& o, const std::string& command) {
  json j;
  j["command"] = command;
  j["seed"] = o.seed;
  j["workers"] = o.workers;
  j["format"] = o.format;
  if (command == "fit" || command == "select-h") {
    j["input"] = o.input;
    j["covariates"] = o.covariates;
    j["k"] = o.k;
    j["t_star"] = o.t_star;
    j["error_family"] = o.error_family;
  }
  if (command == "fit") {
    j["tau_grid"] = io::parse_grid(o.tau_grid, "tau-grid");
    j["n_b"] = o.n_b;
    j["alpha"] = o.alpha;
    if (o.sigma2) j["sigma2"] = *o.sigma2;
  }
  if (!o.h_grid.empty() || command == "select-h") {
    j["h_grid"] = o.h_grid;
    j["n_c"] = o.n_c;
  } else if (command != "simulate") {
    j["h"] = o.h;
  }
  if (command == "select-h") j["tau"] = o.tau;
  if (command == "simulate" || command == "bench") {
    j["case"] = o.sim_case;
    j["n"] = o.n;
    j["overrides"] = {{"intercept_rate", o.intercept_rate},
                      {"time_rate", o.time_rate},
                      {"quadratic_rate", o.quadratic_rate},
                      {"error_variance", o.error_variance}};
  }
  if (command == "bench") {
    j["reps"] = o.reps;
    j["n_b"] = o.n_b;
    j["alpha"] = o.alpha;
    j["tau_grid"] = io::parse_grid(o.bench_tau_grid, "tau-grid");
  }
  return j;
}

json input_digests(const Options& o) {
  return {{"longitudinal", {{"path", o.input}, {"fnv1a64", io::file_digest(o.input)}}},
          {"covariates", {{"path", o.covariates}, {"fnv1a64", io::file_digest(o.covariates)}}}};
}

LongitudinalDataset load(const Options& o, std::vector<std::string>& warnings, int k) {
  if (o.input.empty()) throw Error("--input is required", "input");
  if (o.covariates.empty()) throw Error("--covariates is required", "covariates");
  io::IngestReport report;
  LongitudinalDataset data = io::ingest_csv(o.input, o.covariates, &report);
  warnings = std::move(report.warnings);
  if (k >= 2) {
    for (const auto& s : data.subjects()) {
      if (s.times.front() < 0.0 || s.times.back() > 100.0) {
        warnings.push_back("observation times outside [0, 100] with k >= 2; the design may be ill-conditioned");
        break;
      }
    }
  }
  return data;
}

json bandwidth_json(const BandwidthSearch& bw) {
  return {{"h_grid", bw.h_grid}, {"n_c", bw.n_c},       {"tau", bw.tau},
          {"h1", bw.h1},         {"h2", bw.h2},         {"selected", bw.selected},
          {"m1", bw.m1_curve},   {"m2", bw.m2_curve},   {"disqualified", bw.disqualified},
          {"ridge_applied", bw.ridge_applied}};
}

io::Table m_curve_table(const BandwidthSearch& bw) {
  io::Table t{{"h", "m1", "m2", "disqualified", "ridge_applied"}, {}};
  for (std::size_t i = 0; i < bw.h_grid.size(); ++i)
    t.add_row({num(bw.h_grid[i]), num(bw.m1_curve[i]), num(bw.m2_curve[i]),
               bw.disqualified[i] ? "true" : "false", bw.ridge_applied[i] ? "true" : "false"});
  return t;
}

json run_fit(const Options& o) {
  const io::Format format = io::parse_format(o.format);
  const ModelConfig cfg = model_config(o);
  if (o.n_b != 0 && o.n_b < 2) throw Error("n_b must be 0 (no resampling) or at least 2", "n-b");
  std::vector<std::string> warnings;
  const LongitudinalDataset data = load(o, warnings, cfg.k);
  const fs::path dir = prepare_output(o);

  FitAllOptions fo;
  fo.known_sigma2 = o.sigma2;
  fo.workers = o.workers;
  const QuantileFitResult fit = fit_all(data, cfg, fo);

  std::optional<ResampleDraws> draws;
  if (o.n_b > 0) {
    ResampleOptions ro;
    ro.n_b = o.n_b;
    ro.alpha = o.alpha;
    ro.known_sigma2 = o.sigma2;
    ro.seed = cfg.seed;
    ro.workers = o.workers;
    draws = resample_fit(fit.sample, fit.beta_hat, fit.tau_grid, fit.h_used, fit.sigma2_used, ro);
  }

  io::Table beta{{"tau", "coef_name", "estimate", "naive_estimate", "se", "ci_lo", "ci_hi", "converged"}, {}};
  io::Table pct{{"tau", "coef_name", "pct_lo", "pct_hi"}, {}};
  const std::string nan = "nan";
  for (std::size_t t = 0; t < fit.tau_grid.size(); ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    for (std::size_t j = 0; j < fit.coefficient_names.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      const std::string tau = num(fit.tau_grid[t]);
      const std::string& name = fit.coefficient_names[j];
      beta.add_row({tau, name, num(fit.beta_hat(r, c)), num(fit.beta_naive(r, c)),
                    draws ? num(draws->se(r, c)) : nan, draws ? num(draws->ci_lower(r, c)) : nan,
                    draws ? num(draws->ci_upper(r, c)) : nan, fit.converged[t] ? "true" : "false"});
      if (draws) pct.add_row({tau, name, num(draws->pct_lower(r, c)), num(draws->pct_upper(r, c))});
    }
  }

  std::vector<std::string> outputs;
  const fs::path beta_path = dir / ("beta" + extension(format));
  io::write_table(beta, beta_path, format);
  outputs.push_back(beta_path.string());
  json manifest;
  manifest["tool"] = "ltqr";
  manifest["version"] = kVersion;
  manifest["config"] = config_echo(o, "fit");
  manifest["inputs"] = input_digests(o);
  manifest["n_subjects"] = data.size();
  manifest["n_used"] = fit.stage1.n_used;
  manifest["n_obs"] = fit.stage1.n_obs;
  manifest["sigma2_hat"] = fit.stage1.sigma2_hat;
  manifest["sigma2_used"] = fit.sigma2_used;
  manifest["h_used"] = fit.h_used;
  manifest["coefficient_names"] = fit.coefficient_names;
  manifest["converged"] = fit.converged;
  json excluded = json::array();
  for (const auto& e : fit.stage1.excluded) excluded.push_back({{"id", e.id}, {"reason", to_string(e.reason)}});
  manifest["excluded"] = excluded;
  if (fit.bandwidth_search) {
    manifest["bandwidth_search"] = bandwidth_json(*fit.bandwidth_search);
    const fs::path p = dir / ("m_curves" + extension(format));
    io::write_table(m_curve_table(*fit.bandwidth_search), p, format);
    outputs.push_back(p.string());
  }
  if (draws) {
    const fs::path pct_path = dir / ("beta_percentile" + extension(format));
    io::write_table(pct, pct_path, format);
    const fs::path draws_path = dir / "draws.bin";
    io::write_draws(*draws, fit.coefficient_names, draws_path);
    outputs.push_back(pct_path.string());
    outputs.push_back(draws_path.string());
    manifest["resampling"] = {{"n_b_requested", draws->n_b_requested},
                              {"n_b_used", draws->n_b_used},
                              {"n_b_dropped", draws->n_b_dropped},
                              {"flagged", draws->flagged},
                              {"draws_format_version", io::kDrawsFormatVersion}};
    if (draws->flagged) warnings.push_back("more than 10% of resampling replicates failed to converge");
  }
  if (!fit.all_converged()) warnings.push_back("the corrected fit did not converge at every tau");
  manifest["warnings"] = warnings;
  const fs::path manifest_path = dir / "manifest.json";
  write_json(manifest, manifest_path);
  outputs.push_back(manifest_path.string());
  return {{"outputs", outputs}, {"warnings", warnings}};
}

SimScenario scenario(const Options& o) {
  SimScenario sc;
  sc.sim_case = parse_sim_case(o.sim_case);
  sc.n = o.n;
  sc.seed = o.seed;
  sc.overrides.intercept_rate = o.intercept_rate;
  sc.overrides.time_rate = o.time_rate;
  sc.overrides.quadratic_rate = o.quadratic_rate;
  sc.overrides.error_variance = o.error_variance;
  if (sc.n < 1) throw Error("n must be at least 1", "n");
  for (double rate : {o.intercept_rate, o.time_rate, o.quadratic_rate})
    if (!(rate > 0.0)) throw Error("rate constants must be positive", "rate");
  if (!(o.error_variance > 0.0)) throw Error("error variance must be positive", "error-variance");
  return sc;
}

json run_simulate(const Options& o) {
  const SimScenario sc = scenario(o);
  const SimulatedData sim = generate(sc);
  const fs::path dir = prepare_output(o);
  const fs::path lon = dir / "longitudinal.csv";
  const fs::path cov = dir / "covariates.csv";
  {
    std::ofstream l(lon, std::ios::binary);
    std::ofstream c(cov, std::ios::binary);
    if (!l || !c) throw Error("cannot write dataset files", "output");
    io::write_dataset(sim.data, l, c);
  }
  io::Table truth{{"subject_id", "b"}, {}};
  for (int l = 0; l <= sim.k; ++l) truth.columns.push_back("alpha_" + std::to_string(l));
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    std::vector<std::string> row{sim.data.subjects()[i].id, num(sim.truth.b[i])};
    for (Eigen::Index l = 0; l < sim.truth.alpha[i].size(); ++l) row.push_back(num(sim.truth.alpha[i][l]));
    truth.add_row(std::move(row));
  }
  const fs::path truth_path = dir / "truth.csv";
  io::write_table(truth, truth_path, io::Format::Csv);

  json meta = config_echo(o, "simulate");
  meta["k"] = sim.k;
  meta["t_star"] = sim.t_star;
  meta["error_family"] = family_name(sim.family);
  meta["sigma2"] = sim.sigma2;
  json beta = json::object();
  for (double tau : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const Eigen::VectorXd b = true_beta(sc, tau);
    beta[num(tau)] = std::vector<double>(b.data(), b.data() + b.size());
  }
  meta["true_beta"] = beta;
  const fs::path meta_path = dir / "scenario.json";
  write_json(meta, meta_path);
  return {{"outputs", {lon.string(), cov.string(), truth_path.string(), meta_path.string()}}};
}

json run_bench(const Options& o) {
  const io::Format format = io::parse_format(o.format);
  const SimScenario sc = scenario(o);
  const ModelConfig cfg = scenario_config(sc, io::parse_grid(o.bench_tau_grid, "tau-grid"), o.h);
  cfg.validate();
  if (o.reps < 1) throw Error("reps must be at least 1", "reps");
  if (o.n_b != 0 && o.n_b < 2) throw Error("n_b must be 0 (no resampling) or at least 2", "n-b");
  ReplicationOptions ro;
  ro.n_reps = o.reps;
  ro.n_b = o.n_b;
  ro.alpha = o.alpha;
  ro.workers = o.workers;
  const fs::path dir = prepare_output(o);
  const ReplicationReport rep = run_replication(sc, cfg, ro);

  io::Table table{{"tau", "coef", "bias_naive", "bias_proposed", "sd", "ese", "coverage"}, {}};
  for (std::size_t t = 0; t < rep.tau_grid.size(); ++t) {
    for (std::size_t j = 0; j < rep.coefficient_names.size(); ++j) {
      const ReplicationCell& c = rep.cell(t, j);
      table.add_row({num(rep.tau_grid[t]), rep.coefficient_names[j], num(c.bias_naive),
                     num(c.bias_proposed), num(c.sd_proposed), num(c.mean_se), num(c.coverage)});
    }
  }
  const fs::path table_path = dir / ("bench" + extension(format));
  io::write_table(table, table_path, format);
  json manifest;
  manifest["tool"] = "ltqr";
  manifest["version"] = kVersion;
  manifest["config"] = config_echo(o, "bench");
  manifest["n_reps_requested"] = rep.n_reps_requested;
  manifest["n_reps_used"] = rep.n_reps_used;
  manifest["n_reps_failed"] = rep.n_reps_failed;
  manifest["run_failed"] = rep.run_failed;
  json sd_naive = json::array();
  for (std::size_t t = 0; t < rep.tau_grid.size(); ++t)
    for (std::size_t j = 0; j < rep.coefficient_names.size(); ++j) sd_naive.push_back(rep.cell(t, j).sd_naive);
  manifest["sd_naive"] = sd_naive;
  const fs::path manifest_path = dir / "bench_manifest.json";
  write_json(manifest, manifest_path);
  if (rep.run_failed)
    throw Error(std::to_string(rep.n_reps_failed) + " of " + std::to_string(rep.n_reps_requested) +
                    " replicates failed, above the 5% cap",
                "reps");
  return {{"outputs", {table_path.string(), manifest_path.string()}}};
}

json run_constancy(const Options& o, bool alpha_given) {
  const io::Format format = io::parse_format(o.format);
  if (o.draws.empty()) throw Error("--draws is required", "draws");
  const io::PersistedDraws persisted = io::read_draws(o.draws);
  const ResampleDraws& d = persisted.draws;
  const auto& names = persisted.coefficient_names;
  if (o.tau_window.empty()) throw Error("--tau-window is required", "tau-window");
  const std::vector<double> window = io::parse_grid(o.tau_window, "tau-window");
  if (window.size() != 2) throw Error("tau window must be 'lo,hi'", "tau-window");
  const double alpha = alpha_given ? o.alpha : d.alpha;

  std::vector<int> which;
  if (o.coefs.empty()) {
    for (int j = 1; j < d.p(); ++j) which.push_back(j);
  } else {
    for (const auto& c : o.coefs) {
      const auto it = std::find(names.begin(), names.end(), c);
      if (it == names.end()) throw Error("unknown coefficient '" + c + "'", "coef");
      which.push_back(static_cast<int>(it - names.begin()));
    }
  }
  const fs::path dir = prepare_output(o);
  io::Table table{{"coef_name", "statistic", "lower", "upper", "reject", "tau_lo", "tau_hi", "alpha"}, {}};
  for (int j : which) {
    const ConstancyTestResult r = constancy_test(d, j, window[0], window[1], alpha);
    table.add_row({names[static_cast<std::size_t>(j)], num(r.statistic), num(r.lower), num(r.upper),
                   r.reject ? "true" : "false", num(r.tau_lo), num(r.tau_hi), num(r.alpha)});
  }
  const AverageEffect avg = average_effect(d, window[0], window[1]);
  io::Table avg_table{{"coef_name", "estimate", "se"}, {}};
  for (int j = 0; j < d.p(); ++j)
    avg_table.add_row({names[static_cast<std::size_t>(j)], num(avg.estimate[j]), num(avg.se[j])});
  std::vector<std::string> warnings;
  if (avg.se_exceeds_pointwise)
    warnings.push_back("window-average SE exceeds the largest pointwise SE in the window");

  const fs::path table_path = dir / ("constancy" + extension(format));
  const fs::path avg_path = dir / ("average_effect" + extension(format));
  io::write_table(table, table_path, format);
  io::write_table(avg_table, avg_path, format);
  return {{"outputs", {table_path.string(), avg_path.string()}}, {"warnings", warnings}};
}

json run_select_h(const Options& o) {
  const io::Format format = io::parse_format(o.format);
  Options fit_opts = o;
  fit_opts.tau_grid = num(o.tau);
  const std::vector<double> grid = o.h_grid.empty() ? default_h_grid() : io::parse_grid(o.h_grid, "h-grid");
  ModelConfig cfg = model_config(fit_opts);
  cfg.bandwidth = AutoBandwidth{grid, o.n_c};
  std::vector<std::string> warnings;
  const LongitudinalDataset data = load(o, warnings, cfg.k).canonical();
  const fs::path dir = prepare_output(o);
  const StageOneResult s1 = fit_stage_one(data, cfg, o.workers);
  const FeatureSample sample = make_feature_sample(data, s1);

  BandwidthOptions bo;
  bo.h_grid = grid;
  bo.n_c = o.n_c;
  bo.family = cfg.error_family;
  bo.seed = cfg.seed;
  bo.workers = o.workers;
  const double sigma2 = o.sigma2 ? *o.sigma2 : s1.sigma2_hat;
  const BandwidthSearch bw = select_bandwidth(sample, o.tau, sigma2, bo);

  const fs::path table_path = dir / ("m_curves" + extension(format));
  io::write_table(m_curve_table(bw), table_path, format);
  json sel = bandwidth_json(bw);
  sel["tool"] = "ltqr";
  sel["version"] = kVersion;
  sel["config"] = config_echo(o, "select-h");
  sel["inputs"] = input_digests(o);
  sel["sigma2_used"] = sigma2;
  sel["warnings"] = warnings;
  const fs::path sel_path = dir / "selection.json";
  write_json(sel, sel_path);
  return {{"outputs", {table_path.string(), sel_path.string()}},
          {"selected", bw.selected},
          {"h1", bw.h1},
          {"h2", bw.h2},
          {"n_candidates", grid.size()}};
}

void error_object(std::ostream& err, const std::string& kind, const std::string& message,
                  const std::string& field) {
  json e = {{"error", {{"kind", kind}, {"message", message}}}};
  if (!field.empty()) e["error"]["field"] = field;
  err << e.dump() << '\n';
}

// Finds "--config <path>" or "--config=<path>" among the raw arguments.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Quantile regression of latent longitudinal trajectory features", "ltqr"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto common = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--output", o.output, "Output directory");
    sub->add_option("--format", o.format, "Table format: csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--workers", o.workers, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--config", o.config_path, "Flat key = value configuration file");
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--input", o.input, "Long-format CSV: subject_id,time,y");
    sub->add_option("--covariates", o.covariates, "Covariate CSV: subject_id,<names>[,delta]");
    sub->add_option("--k", o.k, "Polynomial order of the trajectories");
    sub->add_option("--t-star", o.t_star, "Time at which the trajectory slope is taken");
    sub->add_option("--error-family", o.error_family, "laplace or normal");
    sub->add_option("--sigma2", o.sigma2, "Known error variance (skips the pooled estimate)");
  };

  CLI::App* fit = app.add_subcommand("fit", "Fit the corrected quantile process with resampling inference");
  common(fit);
  model(fit);
  fit->add_option("--tau-grid", o.tau_grid, "Quantile levels: lo:hi:step or a comma list");
  auto* h_opt = fit->add_option("--h", o.h, "Fixed bandwidth");
  auto* hg_opt = fit->add_option("--h-grid", o.h_grid, "Bandwidth candidates for automatic selection");
  h_opt->excludes(hg_opt);
  fit->add_option("--n-c", o.n_c, "Noise replicates per candidate bandwidth");
  fit->add_option("--n-b", o.n_b, "Resampling replicates (0 disables)");
  fit->add_option("--alpha", o.alpha, "Interval level 1 - alpha");

  CLI::App* sim = app.add_subcommand("simulate", "Write a synthetic dataset with its hidden truth");
  common(sim);
  sim->add_option("--case", o.sim_case, "Scenario name");
  sim->add_option("--n", o.n, "Number of subjects");
  sim->add_option("--intercept-rate", o.intercept_rate, "Exponential rate of the trajectory intercept (linear cases)");
  sim->add_option("--time-rate", o.time_rate, "Poisson intensity of the observation times");
  sim->add_option("--quadratic-rate", o.quadratic_rate, "Exponential rate of the intercept and curvature (quadratic cases)");
  sim->add_option("--error-variance", o.error_variance, "Within-subject error variance");

  CLI::App* bench = app.add_subcommand("bench", "Monte-Carlo replication study");
  common(bench);
  bench->add_option("--case", o.sim_case, "Scenario name");
  bench->add_option("--n", o.n, "Subjects per replicate");
  bench->add_option("--reps", o.reps, "Replicates");
  bench->add_option("--n-b", o.n_b, "Resampling replicates per fit (0 disables)");
  bench->add_option("--tau-grid", o.bench_tau_grid, "Quantile levels");
  bench->add_option("--h", o.h, "Fixed bandwidth");
  bench->add_option("--alpha", o.alpha, "Interval level 1 - alpha");
  bench->add_option("--intercept-rate", o.intercept_rate, "Exponential rate of the trajectory intercept (linear cases)");
  bench->add_option("--time-rate", o.time_rate, "Poisson intensity of the observation times");
  bench->add_option("--quadratic-rate", o.quadratic_rate, "Exponential rate of the intercept and curvature (quadratic cases)");
  bench->add_option("--error-variance", o.error_variance, "Within-subject error variance");

  CLI::App* cons = app.add_subcommand("test-constancy", "Constancy test from persisted draws");
  common(cons);
  cons->add_option("--draws", o.draws, "draws.bin written by fit");
  cons->add_option("--tau-window", o.tau_window, "lo,hi");
  auto* cons_alpha = cons->add_option("--alpha", o.alpha, "Test level");
  cons->add_option("--coef", o.coefs, "Coefficient names (default: all covariates)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  CLI::App* sel = app.add_subcommand("select-h", "Simulation-extrapolation bandwidth selection");
  common(sel);
  model(sel);
  sel->add_option("--h-grid", o.h_grid, "Candidate bandwidths");
  sel->add_option("--n-c", o.n_c, "Noise replicates per candidate");
  sel->add_option("--tau", o.tau, "Quantile level");

  std::vector<std::string> tokens = args.empty() ? std::vector<std::string>{"ltqr"} : args;
  try {
    if (auto path = find_config(tokens)) {
      std::ifstream in(*path);
      if (!in) throw Error("cannot open config file " + *path, "config");
      const auto entries = io::parse_config(in);
      auto sub_pos = std::find_if(tokens.begin() + 1, tokens.end(), [&](const std::string& t) {
        return app.get_subcommand_no_throw(t) != nullptr;
      });
      if (sub_pos == tokens.end()) throw Error("--config needs a subcommand", "config");
      CLI::App* sub = app.get_subcommand(*sub_pos);
      std::vector<std::string> injected;
      for (const auto& [key, value] : entries) {
        if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr)
          throw Error("unknown config key '" + key + "' for " + *sub_pos, key);
        injected.push_back("--" + key);
        injected.push_back(value);
      }
      // Flags given on the command line come later and win.
      tokens.insert(sub_pos + 1, injected.begin(), injected.end());
    }

    std::vector<const char*> argv;
    for (const auto& t : tokens) argv.push_back(t.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help() << std::flush;
      return 0;
    } catch (const CLI::CallForVersion&) {
      out << kVersion << '\n';
      return 0;
    } catch (const CLI::ParseError& e) {
      error_object(err, "usage", e.what(), "");
      return 2;
    }

    json result;
    std::string command;
    if (fit->parsed()) {
      command = "fit";
      result = run_fit(o);
    } else if (sim->parsed()) {
      command = "simulate";
      result = run_simulate(o);
    } else if (bench->parsed()) {
      command = "bench";
      result = run_bench(o);
    } else if (cons->parsed()) {
      command = "test-constancy";
      result = run_constancy(o, cons_alpha->count() > 0);
    } else {
      command = "select-h";
      result = run_select_h(o);
    }
    result["status"] = "ok";
    result["command"] = command;
    out << result.dump() << '\n';
    if (result.contains("warnings"))
      for (const auto& w : result["warnings"]) err << "warning: " << w.get<std::string>() << '\n';
    return 0;
  } catch (const Error& e) {
    error_object(err, "invalid", e.what(), e.field());
    return 1;
  } catch (const std::exception& e) {
    error_object(err, "internal", e.what(), "");
    return 1;
  }
}

}  // namespace ltqr::cli
