#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ltqr/bandwidth.hpp"
#include "ltqr/error.hpp"
#include "ltqr/estimator.hpp"
#include "ltqr/inference.hpp"
#include "ltqr/io.hpp"
#include "ltqr/simgen.hpp"
#include "ltqr/smoothed_loss.hpp"

namespace py = pybind11;
using namespace ltqr;

namespace {

ErrorFamily family_from(const std::string& name) {
  if (name == "laplace") return ErrorFamily::Laplace;
  if (name == "normal") return ErrorFamily::Normal;
  throw Error("unknown error family '" + name + "'", "error_family");
}

LongitudinalDataset make_dataset(const std::vector<std::string>& ids,
                                 const std::vector<std::vector<double>>& times,
                                 const std::vector<std::vector<double>>& y, const Eigen::MatrixXd& covariates,
                                 std::optional<std::vector<double>> delta,
                                 std::vector<std::string> covariate_names) {
  const std::size_t n = ids.size();
  if (times.size() != n || y.size() != n || static_cast<std::size_t>(covariates.rows()) != n)
    throw Error("ids, times, y and covariates must have one entry per subject", "subjects");
  if (delta && delta->size() != n) throw Error("delta must have one entry per subject", "delta");
  std::vector<SubjectRecord> subjects(n);
  for (std::size_t i = 0; i < n; ++i) {
    SubjectRecord& s = subjects[i];
    s.id = ids[i];
    s.times = times[i];
    s.y = y[i];
    s.x.resize(covariates.cols() + 1);
    s.x[0] = 1.0;
    s.x.tail(covariates.cols()) = covariates.row(static_cast<Eigen::Index>(i)).transpose();
    s.delta = delta ? (*delta)[i] : 1.0;
  }
  return LongitudinalDataset(std::move(subjects), std::move(covariate_names));
}

ModelConfig make_config(std::vector<double> tau_grid, std::optional<double> h,
                        std::optional<std::vector<double>> h_grid, int n_c, int k, double t_star,
                        const std::string& error_family, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.k = k;
  cfg.t_star = t_star;
  cfg.error_family = family_from(error_family);
  cfg.tau_grid = std::move(tau_grid);
  if (h_grid) {
    if (h) throw Error("give either h or h_grid, not both", "h");
    cfg.bandwidth = AutoBandwidth{*h_grid, n_c};
  } else {
    cfg.bandwidth = FixedBandwidth{h.value_or(0.8)};
  }
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

SimScenario make_scenario(const std::string& sim_case, std::size_t n, std::uint64_t seed) {
  SimScenario sc;
  sc.sim_case = parse_sim_case(sim_case);
  sc.n = n;
  sc.seed = seed;
  return sc;
}

}  // namespace

PYBIND11_MODULE(_ltqr, m) {
  m.doc() = "Quantile regression of latent longitudinal trajectory features with a corrected loss.";

  py::register_exception<Error>(m, "LtqrError", PyExc_ValueError);

  py::class_<LongitudinalDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("ids"), py::arg("times"), py::arg("y"), py::arg("covariates"),
           py::arg("delta") = std::nullopt, py::arg("covariate_names") = std::vector<std::string>{})
      .def_property_readonly("n", &LongitudinalDataset::size)
      .def_property_readonly("p", &LongitudinalDataset::p)
      .def_property_readonly("coefficient_names", &LongitudinalDataset::coefficient_names)
      .def_property_readonly("ids",
                             [](const LongitudinalDataset& d) {
                               std::vector<std::string> ids;
                               for (const auto& s : d.subjects()) ids.push_back(s.id);
                               return ids;
                             })
      .def("subject",
           [](const LongitudinalDataset& d, std::size_t i) {
             const SubjectRecord& s = d.subjects().at(i);
             py::dict out;
             out["id"] = s.id;
             out["times"] = s.times;
             out["y"] = s.y;
             out["x"] = s.x;
             out["delta"] = s.delta;
             return out;
           })
      .def("__len__", &LongitudinalDataset::size);

  m.def("read_dataset",
        [](const std::string& longitudinal, const std::string& covariates) {
          io::IngestReport report;
          LongitudinalDataset d = io::ingest_csv(longitudinal, covariates, &report);
          return py::make_tuple(std::move(d), report.warnings);
        },
        py::arg("longitudinal"), py::arg("covariates"),
        "Read the two CSV files; returns (dataset, warnings).");

  m.def("simulate",
        [](const std::string& sim_case, std::size_t n, std::uint64_t seed) {
          const SimulatedData sim = generate(make_scenario(sim_case, n, seed));
          py::dict out;
          out["dataset"] = sim.data;
          out["b"] = sim.truth.b;
          out["alpha"] = sim.truth.alpha;
          out["k"] = sim.k;
          out["t_star"] = sim.t_star;
          out["sigma2"] = sim.sigma2;
          out["error_family"] = sim.family == ErrorFamily::Laplace ? "laplace" : "normal";
          return out;
        },
        py::arg("case") = "case1", py::arg("n") = 500, py::arg("seed") = 1);

  m.def("true_beta",
        [](const std::string& sim_case, double tau) { return true_beta(make_scenario(sim_case, 1, 1), tau); },
        py::arg("case"), py::arg("tau"));

  py::class_<QuantileFitResult>(m, "FitResult")
      .def_readonly("tau_grid", &QuantileFitResult::tau_grid)
      .def_readonly("coefficient_names", &QuantileFitResult::coefficient_names)
      .def_readonly("beta_hat", &QuantileFitResult::beta_hat)
      .def_readonly("beta_naive", &QuantileFitResult::beta_naive)
      .def_readonly("converged", &QuantileFitResult::converged)
      .def_readonly("h_used", &QuantileFitResult::h_used)
      .def_readonly("sigma2_used", &QuantileFitResult::sigma2_used)
      .def_property_readonly("sigma2_hat", [](const QuantileFitResult& r) { return r.stage1.sigma2_hat; })
      .def_property_readonly("n_used", [](const QuantileFitResult& r) { return r.stage1.n_used; })
      .def_property_readonly("excluded",
                             [](const QuantileFitResult& r) {
                               std::vector<std::pair<std::string, std::string>> out;
                               for (const auto& e : r.stage1.excluded) out.emplace_back(e.id, to_string(e.reason));
                               return out;
                             })
      .def_property_readonly("b_hat", [](const QuantileFitResult& r) { return r.sample.b_hat; })
      .def_property_readonly("d", [](const QuantileFitResult& r) { return r.sample.d; })
      .def_property_readonly("x", [](const QuantileFitResult& r) { return r.sample.x; });

  m.def("fit",
        [](const LongitudinalDataset& data, std::vector<double> tau_grid, std::optional<double> h,
           std::optional<std::vector<double>> h_grid, int n_c, int k, double t_star, const std::string& error_family,
           std::optional<double> sigma2, std::uint64_t seed, int workers) {
          const ModelConfig cfg = make_config(std::move(tau_grid), h, h_grid, n_c, k, t_star, error_family, seed);
          FitAllOptions fo;
          fo.known_sigma2 = sigma2;
          fo.workers = workers;
          py::gil_scoped_release release;
          return fit_all(data, cfg, fo);
        },
        py::arg("data"), py::arg("tau_grid") = std::vector<double>{0.5}, py::arg("h") = std::nullopt,
        py::arg("h_grid") = std::nullopt, py::arg("n_c") = 20, py::arg("k") = 1, py::arg("t_star") = 0.0,
        py::arg("error_family") = "laplace", py::arg("sigma2") = std::nullopt, py::arg("seed") = 1,
        py::arg("workers") = 0);

  py::class_<ResampleDraws>(m, "Draws")
      .def_readonly("tau_grid", &ResampleDraws::tau_grid)
      .def_readonly("n_b_requested", &ResampleDraws::n_b_requested)
      .def_readonly("n_b_used", &ResampleDraws::n_b_used)
      .def_readonly("n_b_dropped", &ResampleDraws::n_b_dropped)
      .def_readonly("flagged", &ResampleDraws::flagged)
      .def_readonly("alpha", &ResampleDraws::alpha)
      .def_readonly("beta_hat", &ResampleDraws::beta_hat)
      .def_readonly("beta_star", &ResampleDraws::beta_star)
      .def_readonly("sigma2_star", &ResampleDraws::sigma2_star)
      .def_readonly("se", &ResampleDraws::se)
      .def_readonly("ci_lower", &ResampleDraws::ci_lower)
      .def_readonly("ci_upper", &ResampleDraws::ci_upper)
      .def_readonly("pct_lower", &ResampleDraws::pct_lower)
      .def_readonly("pct_upper", &ResampleDraws::pct_upper);

  m.def("resample",
        [](const QuantileFitResult& fit, int n_b, double alpha, std::optional<double> sigma2, std::uint64_t seed,
           int workers) {
          ResampleOptions ro;
          ro.n_b = n_b;
          ro.alpha = alpha;
          ro.known_sigma2 = sigma2;
          ro.seed = seed;
          ro.workers = workers;
          py::gil_scoped_release release;
          return resample_fit(fit.sample, fit.beta_hat, fit.tau_grid, fit.h_used, fit.sigma2_used, ro);
        },
        py::arg("fit"), py::arg("n_b") = 200, py::arg("alpha") = 0.05, py::arg("sigma2") = std::nullopt,
        py::arg("seed") = 1, py::arg("workers") = 0);

  m.def("constancy_test",
        [](const ResampleDraws& d, int j, double tau_lo, double tau_hi, double alpha) {
          const ConstancyTestResult r = constancy_test(d, j, tau_lo, tau_hi, alpha);
          py::dict out;
          out["coefficient"] = r.coefficient;
          out["statistic"] = r.statistic;
          out["lower"] = r.lower;
          out["upper"] = r.upper;
          out["reject"] = r.reject;
          out["tau_lo"] = r.tau_lo;
          out["tau_hi"] = r.tau_hi;
          out["alpha"] = r.alpha;
          return out;
        },
        py::arg("draws"), py::arg("j"), py::arg("tau_lo"), py::arg("tau_hi"), py::arg("alpha") = 0.05);

  m.def("average_effect",
        [](const ResampleDraws& d, double tau_lo, double tau_hi) {
          const AverageEffect a = average_effect(d, tau_lo, tau_hi);
          return py::make_tuple(a.estimate, a.se);
        },
        py::arg("draws"), py::arg("tau_lo"), py::arg("tau_hi"), "Returns (estimate, se).");

  m.def("select_bandwidth",
        [](const QuantileFitResult& fit, double tau, std::vector<double> h_grid, int n_c, const std::string& family,
           std::uint64_t seed, int workers) {
          BandwidthOptions bo;
          bo.h_grid = h_grid.empty() ? default_h_grid() : std::move(h_grid);
          bo.n_c = n_c;
          bo.family = family_from(family);
          bo.seed = seed;
          bo.workers = workers;
          BandwidthSearch r;
          {
            py::gil_scoped_release release;
            r = select_bandwidth(fit.sample, tau, fit.sigma2_used, bo);
          }
          py::dict out;
          out["selected"] = r.selected;
          out["h1"] = r.h1;
          out["h2"] = r.h2;
          out["h_grid"] = r.h_grid;
          out["m1"] = r.m1_curve;
          out["m2"] = r.m2_curve;
          return out;
        },
        py::arg("fit"), py::arg("tau") = 0.5, py::arg("h_grid") = std::vector<double>{}, py::arg("n_c") = 20,
        py::arg("error_family") = "laplace", py::arg("seed") = 1, py::arg("workers") = 0);

  m.def("extrapolate_bandwidth", &extrapolate_bandwidth, py::arg("h1"), py::arg("h2"));

  m.def("naive_qr", &naive_qr, py::arg("b"), py::arg("x"), py::arg("tau"));

  m.def("rho_tau", py::vectorize([](double v, double tau) { return rho_tau(v, tau); }), py::arg("v"),
        py::arg("tau"));
  m.def("rho_smooth",
        py::vectorize([](double v, double tau, double h) { return rho_smooth(v, LossParams{tau, h, 0.0}); }),
        py::arg("v"), py::arg("tau"), py::arg("h"));
  m.def("rho_corrected",
        py::vectorize([](double xi, double tau, double h, double sigma2) {
          return rho_corrected(xi, LossParams{tau, h, sigma2});
        }),
        py::arg("xi"), py::arg("tau"), py::arg("h"), py::arg("sigma2"));
}
