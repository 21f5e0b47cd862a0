#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hetdemand/baseline.hpp"
#include "hetdemand/cli.hpp"
#include "hetdemand/covreg.hpp"
#include "hetdemand/diagnostics.hpp"
#include "hetdemand/error.hpp"
#include "hetdemand/harvey.hpp"
#include "hetdemand/report.hpp"
#include "hetdemand/stochastics.hpp"
#include "hetdemand/synth.hpp"

namespace py = pybind11;
using namespace hetdemand;

namespace {

DemandDataset make_dataset(const Eigen::VectorXd& x, const Eigen::MatrixXd& y) {
  std::vector<std::string> labels;
  for (Eigen::Index j = 0; j < y.cols(); ++j) labels.push_back("edp" + std::to_string(j + 1));
  return DemandDataset(x, y, labels);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Heteroscedastic seismic demand models";

  // Messages start with the error category, e.g. "InsufficientData: ...".
  py::register_exception<Error>(m, "HetdemandError", PyExc_RuntimeError);

  m.attr("__version__") = std::string(tool_version());

  m.def("design_matrix", [](const Eigen::VectorXd& x, int degree) { return design_matrix(x, {degree}); },
        py::arg("x"), py::arg("degree") = 3);

  // --- synthetic data ---
  m.def("truth_preset_names", &truth_preset_names);
  m.def(
      "generate",
      [](const std::string& preset, std::uint64_t seed, int records) {
        const auto d = generate(truth_preset(preset), table1_grid(records), seed);
        return py::make_tuple(d.x(), d.y(), d.labels());
      },
      py::arg("preset"), py::arg("seed") = 0, py::arg("records") = 80,
      "Returns (x, y, labels) for a named truth on the 25-level scaling grid.");
  m.def("table1_ln_sa", [] { return table1_grid().ln_sa(); });

  // --- baseline ---
  py::class_<LinearFit>(m, "LinearFit")
      .def_readonly("coeffs", &LinearFit::coeffs)
      .def_readonly("sigma", &LinearFit::sigma)
      .def_readonly("param_cov", &LinearFit::param_cov)
      .def_readonly("n", &LinearFit::n)
      .def_readonly("dof", &LinearFit::dof)
      .def_readonly("sse", &LinearFit::sse);
  m.def("fit_ols", &fit_ols, py::arg("y"), py::arg("X"));
  m.def("fit_wls", &fit_wls, py::arg("y"), py::arg("X"), py::arg("weights"));

  py::class_<MLRFit>(m, "MLRFit")
      .def_readonly("coeffs", &MLRFit::coeffs)
      .def_readonly("sigma", &MLRFit::sigma)
      .def_readonly("singular_sigma", &MLRFit::singular_sigma);
  m.def(
      "fit_mlr",
      [](const Eigen::MatrixXd& y, const Eigen::VectorXd& x, bool ml) {
        return fit_mlr(y, x, ml ? CovDivisor::kMaximumLikelihood : CovDivisor::kUnbiased);
      },
      py::arg("Y"), py::arg("x"), py::arg("ml_divisor") = false);

  // --- diagnostics ---
  py::class_<TestResult>(m, "TestResult")
      .def_readonly("statistic", &TestResult::statistic)
      .def_readonly("dof", &TestResult::dof)
      .def_readonly("p_value", &TestResult::p_value)
      .def_readonly("variant", &TestResult::variant);
  m.def(
      "breusch_pagan",
      [](const Eigen::VectorXd& e, const Eigen::MatrixXd& z, bool studentized) {
        return breusch_pagan(e, z, studentized ? BreuschPaganVariant::kStudentized : BreuschPaganVariant::kOriginal);
      },
      py::arg("residuals"), py::arg("Z"), py::arg("studentized") = true);
  m.def("white_test", &white_test, py::arg("residuals"), py::arg("X"), py::arg("cross_products") = true);

  // --- Harvey ---
  py::class_<HarveySpec>(m, "HarveySpec")
      .def(py::init<int, int>(), py::arg("mean_degree") = 3, py::arg("var_degree") = 3)
      .def_readwrite("mean_degree", &HarveySpec::mean_degree)
      .def_readwrite("var_degree", &HarveySpec::var_degree);
  py::class_<HarveyFit>(m, "HarveyFit")
      .def_readonly("beta", &HarveyFit::beta)
      .def_readonly("gamma", &HarveyFit::gamma)
      .def_readonly("loglik", &HarveyFit::loglik)
      .def_readonly("iterations", &HarveyFit::iterations)
      .def_readonly("converged", &HarveyFit::converged)
      .def_readonly("loglik_trace", &HarveyFit::loglik_trace);
  m.def("fit_harvey_mle", [](const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                             const HarveySpec& spec) { return fit_harvey_mle(y, x, spec); },
        py::arg("y"), py::arg("x"), py::arg("spec") = HarveySpec{});

  py::class_<HarveyPosterior>(m, "HarveyPosterior")
      .def_readonly("chains", &HarveyPosterior::chains)
      .def_readonly("parameter_names", &HarveyPosterior::parameter_names)
      .def_readonly("acceptance_rate", &HarveyPosterior::acceptance_rate)
      .def_readonly("not_converged", &HarveyPosterior::not_converged)
      .def_readonly("warnings", &HarveyPosterior::warnings)
      .def("posterior_mean", &HarveyPosterior::posterior_mean)
      .def("r_hat", [](const HarveyPosterior& p) {
        std::vector<double> out;
        for (const auto& s : p.summaries) out.push_back(s.diagnostics.r_hat);
        return out;
      })
      .def("mcse", [](const HarveyPosterior& p) {
        std::vector<double> out;
        for (const auto& s : p.summaries) out.push_back(s.diagnostics.mcse);
        return out;
      });
  m.def(
      "fit_harvey_bayes",
      [](const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec, int chains, int iterations,
         int thin, double prior_variance, std::uint64_t seed) {
        McmcProtocol protocol;
        protocol.chains = chains;
        protocol.iterations = iterations;
        protocol.thin = thin;
        py::gil_scoped_release release;
        return fit_harvey_bayes(y, x, spec, HarveyPriors{prior_variance}, protocol, seed);
      },
      py::arg("y"), py::arg("x"), py::arg("spec") = HarveySpec{}, py::arg("chains") = 4,
      py::arg("iterations") = 5000, py::arg("thin") = 10, py::arg("prior_variance") = 100.0, py::arg("seed") = 0);

  py::class_<PredictionBands>(m, "PredictionBands")
      .def_readonly("grid", &PredictionBands::grid)
      .def_readonly("mean", &PredictionBands::mean)
      .def_readonly("sd", &PredictionBands::sd)
      .def_readonly("cred_lo", &PredictionBands::cred_lo)
      .def_readonly("cred_hi", &PredictionBands::cred_hi)
      .def_readonly("pred_lo", &PredictionBands::pred_lo)
      .def_readonly("pred_hi", &PredictionBands::pred_hi)
      .def_readonly("level", &PredictionBands::level);
  m.def("harvey_predict", py::overload_cast<const HarveyFit&, const Eigen::VectorXd&, double>(&harvey_predict),
        py::arg("fit"), py::arg("grid"), py::arg("level") = 0.9);
  m.def("harvey_predict",
        py::overload_cast<const HarveyPosterior&, const Eigen::VectorXd&, double>(&harvey_predict),
        py::arg("posterior"), py::arg("grid"), py::arg("level") = 0.9);

  // --- covariance regression ---
  py::class_<CovRegFit>(m, "CovRegFit")
      .def_readonly("A", &CovRegFit::A)
      .def_readonly("B", &CovRegFit::B)
      .def_readonly("Psi", &CovRegFit::Psi)
      .def_readonly("loglik", &CovRegFit::loglik)
      .def_readonly("iterations", &CovRegFit::iterations)
      .def_readonly("converged", &CovRegFit::converged)
      .def_readonly("loglik_trace", &CovRegFit::loglik_trace)
      .def_readonly("warnings", &CovRegFit::warnings)
      .def("covariance_at", [](const CovRegFit& f, double x) { return covariance_at(f, x); })
      .def("mean_at", [](const CovRegFit& f, double x) { return mean_at(f, x); });
  m.def(
      "fit_covreg_em",
      [](const Eigen::VectorXd& x, const Eigen::MatrixXd& y, int rank, int degree, double tolerance,
         std::uint64_t seed) {
        EmOptions options;
        options.tolerance = tolerance;
        options.seed = seed;
        const auto data = make_dataset(x, y);
        py::gil_scoped_release release;
        return fit_covreg_em(data, {rank, degree}, options);
      },
      py::arg("x"), py::arg("Y"), py::arg("rank") = 3, py::arg("degree") = 3, py::arg("tolerance") = 1e-9,
      py::arg("seed") = 0);
  m.def("covariance_to_correlation", &covariance_to_correlation);

  py::class_<Ellipse>(m, "Ellipse")
      .def_readonly("center", &Ellipse::center)
      .def_readonly("semi_axes", &Ellipse::semi_axes)
      .def_readonly("angle", &Ellipse::angle)
      .def_readonly("level", &Ellipse::level)
      .def("contains", &Ellipse::contains)
      .def("area", &Ellipse::area);
  m.def(
      "ellipse_from_covariance",
      [](const Eigen::Matrix2d& s, const Eigen::Vector2d& c, double level) { return ellipse_from_covariance(s, c, level); },
      py::arg("S"), py::arg("center"), py::arg("level") = 0.9);

  // --- distributions ---
  m.def("chi2_cdf", &chi2_cdf);
  m.def("chi2_quantile", &chi2_quantile);
  m.def("normal_quantile", &normal_quantile);

  // Runs the command-line tool in-process; returns (exit code, stdout, stderr).
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
