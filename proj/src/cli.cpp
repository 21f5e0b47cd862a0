#include "hetdemand/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include <CLI11.hpp>

#include "hetdemand/baseline.hpp"
#include "hetdemand/covreg.hpp"
#include "hetdemand/dataset.hpp"
#include "hetdemand/diagnostics.hpp"
#include "hetdemand/error.hpp"
#include "hetdemand/harvey.hpp"
#include "hetdemand/prediction.hpp"
#include "hetdemand/report.hpp"
#include "hetdemand/stochastics.hpp"
#include "hetdemand/synth.hpp"

namespace hetdemand {
namespace {

using nlohmann::json;

// Carries an exit code out of a command.
struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void usage(const std::string& message) { throw Failure{kExitUsage, message}; }

// Runs fn, mapping library errors to `code` (Io errors always map to 3).
template <typename Fn>
auto stage(int code, Fn&& fn) {
  try {
    return fn();
  } catch (const Failure&) {
    throw;
  } catch (const Error& e) {
    throw Failure{e.code() == ErrorCode::kIo ? static_cast<int>(kExitIo) : code, e.what()};
  } catch (const std::filesystem::filesystem_error& e) {
    throw Failure{kExitIo, e.what()};
  }
}

const std::vector<std::string> kModels = {"ols",       "wls",          "bilinear",  "varfunc",     "mlr",
                                          "harvey-mle", "harvey-bayes", "covreg-em", "covreg-gibbs"};

struct GenerateArgs {
  std::string preset;
  std::string truth;
  std::string output;
  std::uint64_t seed = 0;
  int records = 80;
};

struct FitArgs {
  std::string model;
  std::string data;
  std::string output;
  std::string draws;
  int demand = 1;
  int degree = -1;
  int var_degree = -1;
  int rank = 3;
  int chains = -1;
  int iters = -1;
  int thin = 10;
  double burn_fraction = 0.5;
  int burn_draws = 200;
  double prior_variance = 100.0;
  double nu0 = -1.0;
  double v0_scale = kDefaultV0Scale;
  double em_tol = 1e-9;
  int em_max_iter = 100000;
  std::uint64_t seed = 0;
  std::string weights = "stripe";
  std::string scale = "natural";
  std::string divisor = "unbiased";
};

struct TestArgs {
  std::string method = "bp";
  std::string fit;
  std::string data;
  std::string output;
  int demand = 0;
  int aux_degree = 1;
};

struct PredictArgs {
  std::string fit;
  std::string grid = "-2.3:0.1:0.1";
  double level = 0.90;
  std::string output;
};

struct CurvesArgs {
  std::string fit;
  std::string grid = "-2.3:0.1:0.1";
  double level = 0.90;
  std::string output;
};

struct EllipseArgs {
  std::string fit;
  std::string pair = "1,2";
  double level = 0.90;
  std::vector<double> at;
  std::string space = "demand";
  std::string output;
};

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& writer) {
  if (path.empty() || path == "-") {
    writer(out);
    return;
  }
  stage(kExitIo, [&] {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    writer(file);
    if (!file) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
    return 0;
  });
}

DemandDataset load_data(const std::string& path) {
  if (path.empty()) usage("--data is required");
  // Unreadable or malformed files are I/O failures; data that parses but
  // cannot support a fit is an estimation failure.
  try {
    return load_dataset_file(path);
  } catch (const Error& e) {
    const bool io = e.code() == ErrorCode::kIo || e.code() == ErrorCode::kMissingColumn;
    throw Failure{io ? static_cast<int>(kExitIo) : static_cast<int>(kExitEstimation), e.what()};
  } catch (const std::filesystem::filesystem_error& e) {
    throw Failure{kExitIo, e.what()};
  }
}

json load_fit(const std::string& path) {
  if (path.empty()) usage("--fit is required");
  json doc = stage(kExitIo, [&] { return read_json_file(path); });
  if (!doc.is_object() || !doc.contains("model") || !doc.contains("result")) {
    throw Failure{kExitIo, "'" + path + "' is not a hetdemand fit document"};
  }
  return doc;
}

std::string input_hash(const std::string& path) {
  return stage(kExitIo, [&] { return file_hash(path); });
}

// Provenance sidecar for CSV outputs.
void write_csv_meta(const std::string& path, const json& meta) {
  if (path.empty() || path == "-") return;
  stage(kExitIo, [&] {
    write_json_file(path + ".meta.json", meta);
    return 0;
  });
}

json csv_meta(const std::string& command, const json& fit_doc, const std::string& fit_path, json extra) {
  json meta;
  meta["tool"] = kToolName;
  meta["version"] = tool_version();
  meta["command"] = command;
  meta["seed"] = fit_doc.value("seed", std::uint64_t{0});
  meta["input"] = {{"path", fit_path}, {"hash", input_hash(fit_path)}};
  meta["model"] = fit_doc.at("model");
  meta["spec"] = std::move(extra);
  return meta;
}

// --- generate ----------------------------------------------------------------

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.output.empty()) usage("-o/--output is required");
  if (a.records < 1) usage("--records must be >= 1");
  if (a.preset.empty() == a.truth.empty()) usage("give exactly one of --preset or --truth");
  SyntheticTruth truth;
  if (!a.preset.empty()) {
    const auto names = truth_preset_names();
    if (std::find(names.begin(), names.end(), a.preset) == names.end()) {
      std::string list;
      for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
      usage("unknown preset '" + a.preset + "' (choose from " + list + ")");
    }
    truth = truth_preset(a.preset);
  } else {
    truth = stage(kExitUsage, [&] { return load_truth_file(a.truth); });
  }
  const DemandDataset data =
      stage(kExitEstimation, [&] { return generate(truth, table1_grid(a.records), a.seed); });
  stage(kExitIo, [&] {
    save_dataset_file(a.output, data);
    save_truth_file(a.output + ".truth.json", truth);
    return 0;
  });
  out << "wrote " << data.n() << " rows to " << a.output << '\n';
  return kExitOk;
}

// --- fit ---------------------------------------------------------------------

Eigen::Index demand_column(const DemandDataset& data, int demand) {
  if (demand < 1 || demand > data.p()) {
    usage("--demand must lie in 1.." + std::to_string(data.p()));
  }
  return demand - 1;
}

// Per-row stripe standard deviation of one component (rows of singleton stripes get NaN).
Eigen::VectorXd stripe_sd_per_row(const DemandDataset& data, Eigen::Index column, std::vector<double>& levels,
                                  std::vector<double>& sds) {
  const StripeSet stripes = build_stripes(data);
  const auto summaries = stripe_summary(data, stripes);
  Eigen::VectorXd per_row = Eigen::VectorXd::Constant(data.n(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t s = 0; s < stripes.stripes.size(); ++s) {
    if (!summaries[s].std_defined()) continue;
    levels.push_back(summaries[s].level);
    sds.push_back(summaries[s].std[column]);
    for (auto row : stripes.stripes[s].members) per_row[static_cast<Eigen::Index>(row)] = summaries[s].std[column];
  }
  return per_row;
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  if (std::find(kModels.begin(), kModels.end(), a.model) == kModels.end()) usage("unknown model '" + a.model + "'");
  if (a.output.empty()) usage("-o/--output is required");
  const bool bayes = a.model == "harvey-bayes" || a.model == "covreg-gibbs";
  if (!a.draws.empty() && !bayes) usage("--draws applies only to harvey-bayes and covreg-gibbs");
  if (a.thin < 1 || a.rank < 0 || a.burn_draws < 0 || !(a.burn_fraction >= 0.0 && a.burn_fraction < 1.0) ||
      !(a.prior_variance > 0.0) || !(a.v0_scale > 0.0) || !(a.em_tol > 0.0) || a.em_max_iter < 1) {
    usage("invalid numeric option");
  }

  const DemandDataset data = load_data(a.data);
  const std::string hash = input_hash(a.data);
  const bool univariate = a.model != "mlr" && a.model != "covreg-em" && a.model != "covreg-gibbs";
  const Eigen::Index column = univariate ? demand_column(data, a.demand) : 0;

  Provenance prov{"fit", a.model, a.seed, a.data, hash};
  json spec;
  json result;
  std::vector<std::string> warnings;
  std::function<void()> write_draws;

  stage(kExitEstimation, [&] {
    const Eigen::VectorXd y = univariate ? data.demand(column) : Eigen::VectorXd();
    if (univariate) spec["demand"] = a.demand;

    if (a.model == "ols" || a.model == "wls") {
      const int degree = a.degree < 0 ? 1 : a.degree;
      const Eigen::MatrixXd x = design_matrix(data.x(), {degree, true});
      spec["degree"] = degree;
      if (a.model == "ols") {
        result = to_json(fit_ols(y, x));
      } else {
        std::vector<double> levels;
        std::vector<double> sds;
        Eigen::VectorXd sd_row = stripe_sd_per_row(data, column, levels, sds);
        if (a.weights == "varfunc") {
          const auto vf = fit_variance_function(
              Eigen::Map<const Eigen::VectorXd>(levels.data(), static_cast<Eigen::Index>(levels.size())),
              Eigen::Map<const Eigen::VectorXd>(sds.data(), static_cast<Eigen::Index>(sds.size())),
              a.scale == "log" ? IntensityScale::kLog : IntensityScale::kNatural);
          for (Eigen::Index i = 0; i < data.n(); ++i) sd_row[i] = vf.predict(data.x()[i]);
          if (vf.negative_prediction) warnings.push_back("variance function is negative somewhere on its domain");
        } else if (a.weights != "stripe") {
          usage("--weights must be stripe or varfunc");
        }
        if (!sd_row.allFinite()) {
          throw Error(ErrorCode::kInsufficientData, "every row needs a stripe with at least 2 records");
        }
        const Eigen::VectorXd w = sd_row.array().square().inverse().matrix();
        spec["weights"] = a.weights;
        if (a.weights == "varfunc") spec["scale"] = a.scale;
        result = to_json(fit_wls(y, x, w));
      }
    } else if (a.model == "bilinear") {
      result = to_json(fit_bilinear(y, data.x()));
    } else if (a.model == "varfunc") {
      if (a.scale != "natural" && a.scale != "log") usage("--scale must be natural or log");
      std::vector<double> levels;
      std::vector<double> sds;
      stripe_sd_per_row(data, column, levels, sds);
      const auto vf = fit_variance_function(
          Eigen::Map<const Eigen::VectorXd>(levels.data(), static_cast<Eigen::Index>(levels.size())),
          Eigen::Map<const Eigen::VectorXd>(sds.data(), static_cast<Eigen::Index>(sds.size())),
          a.scale == "log" ? IntensityScale::kLog : IntensityScale::kNatural);
      if (vf.negative_prediction) warnings.push_back("variance function is negative somewhere on its domain");
      result = to_json(vf);
      result["stripe_levels"] = levels;
      result["stripe_sd"] = sds;
      spec["scale"] = a.scale;
    } else if (a.model == "mlr") {
      if (a.divisor != "unbiased" && a.divisor != "ml") usage("--divisor must be unbiased or ml");
      const int degree = a.degree < 0 ? 1 : a.degree;
      const auto divisor = a.divisor == "ml" ? CovDivisor::kMaximumLikelihood : CovDivisor::kUnbiased;
      const MLRFit fit = fit_mlr_design(data.y(), design_matrix(data.x(), {degree, true}), divisor);
      if (fit.singular_sigma) warnings.push_back("residual correlation of +-1: Sigma is singular");
      result = to_json(fit);
      spec["degree"] = degree;
      spec["divisor"] = a.divisor;
    } else if (a.model == "harvey-mle") {
      HarveySpec hs{a.degree < 0 ? 3 : a.degree, a.var_degree < 0 ? 3 : a.var_degree};
      const HarveyFit fit = fit_harvey_mle(y, data.x(), hs);
      result = to_json(fit);
      const HarveyModel model(y, data.x(), hs);
      result["score_max"] = model.score(fit.beta, fit.gamma).cwiseAbs().maxCoeff();
      spec["mean_degree"] = hs.mean_degree;
      spec["var_degree"] = hs.var_degree;
    } else if (a.model == "harvey-bayes") {
      HarveySpec hs{a.degree < 0 ? 3 : a.degree, a.var_degree < 0 ? 3 : a.var_degree};
      McmcProtocol protocol;
      if (a.chains > 0) protocol.chains = a.chains;
      if (a.iters > 0) protocol.iterations = a.iters;
      protocol.thin = a.thin;
      protocol.burn_in_fraction = a.burn_fraction;
      const auto post = std::make_shared<HarveyPosterior>(
          fit_harvey_bayes(y, data.x(), hs, HarveyPriors{a.prior_variance}, protocol, a.seed));
      warnings = post->warnings;
      result = to_json(*post);
      spec["mean_degree"] = hs.mean_degree;
      spec["var_degree"] = hs.var_degree;
      spec["chains"] = protocol.chains;
      spec["iterations"] = protocol.iterations;
      spec["thin"] = protocol.thin;
      spec["burn_in_fraction"] = protocol.burn_in_fraction;
      spec["prior_variance"] = a.prior_variance;
      write_draws = [post, &a, &out] { emit(a.draws, out, [&](std::ostream& o) { write_draws_csv(o, *post); }); };
    } else if (a.model == "covreg-em") {
      CovRegSpec cs{a.rank, a.degree < 0 ? 3 : a.degree};
      EmOptions eo;
      eo.tolerance = a.em_tol;
      eo.max_iterations = a.em_max_iter;
      eo.seed = a.seed;
      const CovRegFit fit = fit_covreg_em(data, cs, eo);
      warnings = fit.warnings;
      result = to_json(fit);
      spec["rank"] = cs.rank;
      spec["basis_degree"] = cs.basis_degree;
      spec["em_tolerance"] = eo.tolerance;
      spec["em_max_iterations"] = eo.max_iterations;
    } else {
      CovRegSpec cs{a.rank, a.degree < 0 ? 3 : a.degree};
      GibbsProtocol protocol;
      if (a.iters > 0) protocol.iterations = a.iters;
      if (a.chains > 0) protocol.chains = a.chains;
      protocol.thin = a.thin;
      protocol.burn_in_draws = a.burn_draws;
      CovRegPriors priors = default_covreg_priors(data, cs);
      if (a.nu0 > 0.0) priors.nu0 = a.nu0;
      priors.V0 *= a.v0_scale / kDefaultV0Scale;
      const auto post =
          std::make_shared<CovRegPosterior>(fit_covreg_gibbs(data, cs, priors, protocol, a.seed));
      warnings = post->warnings;
      result = to_json(*post);
      spec["rank"] = cs.rank;
      spec["basis_degree"] = cs.basis_degree;
      spec["iterations"] = protocol.iterations;
      spec["thin"] = protocol.thin;
      spec["burn_in_draws"] = protocol.burn_in_draws;
      spec["chains"] = protocol.chains;
      spec["nu0"] = priors.nu0;
      spec["v0_scale"] = a.v0_scale;
      write_draws = [post, &a, &out] { emit(a.draws, out, [&](std::ostream& o) { write_draws_csv(o, *post); }); };
    }
    return 0;
  });

  const json doc = make_document(prov, spec, result, warnings);
  stage(kExitIo, [&] {
    write_json_file(a.output, doc);
    return 0;
  });
  if (write_draws && !a.draws.empty()) write_draws();
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  out << "wrote " << a.model << " fit to " << a.output << '\n';
  return kExitOk;
}

// --- test --------------------------------------------------------------------

// Mean prediction of the fitted model at each row, and the mean-model design.
Eigen::VectorXd fitted_mean(const json& doc, const DemandDataset& data, Eigen::Index column, Eigen::MatrixXd& design) {
  const std::string model = doc.at("model");
  const json& r = doc.at("result");
  const json& spec = doc.at("spec");
  const Eigen::VectorXd& x = data.x();
  if (model == "ols" || model == "wls") {
    const LinearFit f = linear_fit_from_json(r);
    design = design_matrix(x, {static_cast<int>(f.coeffs.size()) - 1, true});
    return design * f.coeffs;
  }
  if (model == "bilinear") {
    const BilinearFit f = bilinear_fit_from_json(r);
    design = design_matrix(x, {1, true});
    Eigen::VectorXd mu(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) mu[i] = f.predict(x[i]);
    return mu;
  }
  if (model == "harvey-mle") {
    const HarveyFit f = harvey_fit_from_json(r);
    design = design_matrix(x, {f.spec.mean_degree, true});
    return design * f.beta;
  }
  if (model == "harvey-bayes") {
    const HarveyPosterior p = harvey_posterior_from_json(r);
    design = design_matrix(x, {p.spec.mean_degree, true});
    return design * p.posterior_mean().head(p.n_beta());
  }
  if (model == "mlr") {
    const Eigen::MatrixXd coeffs = matrix_from_json(r.at("coeffs"));
    design = design_matrix(x, {static_cast<int>(coeffs.cols()) - 1, true});
    return design * coeffs.row(column).transpose();
  }
  if (model == "covreg-em") {
    const CovRegFit f = covreg_fit_from_json(r);
    design = design_matrix(x, {f.spec.basis_degree, true});
    return design * f.A.row(column).transpose();
  }
  if (model == "covreg-gibbs") {
    const CovRegPosterior p = covreg_posterior_from_json(r);
    design = design_matrix(x, {p.spec.basis_degree, true});
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p.q);
    for (std::size_t d = 0; d < p.draws.size(); ++d) a += p.A(d).row(column).transpose();
    return design * (a / static_cast<double>(p.draws.size()));
  }
  (void)spec;
  usage("model '" + model + "' has no mean model to test");
}

int cmd_test(const TestArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> methods = {"bp", "bp-original", "white", "white-no-cross"};
  if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) usage("unknown method '" + a.method + "'");
  if (a.aux_degree < 1) usage("--aux-degree must be >= 1");
  const json doc = load_fit(a.fit);
  const DemandDataset data = load_data(a.data);
  const std::string hash = input_hash(a.data);
  std::vector<std::string> warnings;
  if (doc.at("input").value("hash", "") != hash) warnings.push_back("data hash differs from the fit's input");

  int demand = a.demand;
  if (demand == 0) demand = doc.at("spec").value("demand", 1);
  const Eigen::Index column = demand_column(data, demand);

  const TestResult res = stage(kExitEstimation, [&] {
    Eigen::MatrixXd design;
    const Eigen::VectorXd mu = fitted_mean(doc, data, column, design);
    const Eigen::VectorXd e = data.demand(column) - mu;
    if (a.method == "bp" || a.method == "bp-original") {
      const auto variant = a.method == "bp" ? BreuschPaganVariant::kStudentized : BreuschPaganVariant::kOriginal;
      return breusch_pagan(e, design_matrix(data.x(), {a.aux_degree, true}), variant);
    }
    return white_test(e, design, a.method == "white");
  });

  json spec = {{"method", a.method}, {"demand", demand}, {"fit", a.fit}, {"fit_model", doc.at("model")}};
  if (a.method.rfind("bp", 0) == 0) spec["aux_degree"] = a.aux_degree;
  const json result = make_document({"test", doc.at("model"), doc.value("seed", std::uint64_t{0}), a.data, hash},
                                    spec, to_json(res), warnings);
  emit(a.output, out, [&](std::ostream& o) { o << result.dump(2) << '\n'; });
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  err << a.method << " (" << res.variant << "): statistic " << res.statistic << ", dof " << res.dof << ", p-value "
      << res.p_value << '\n';
  return kExitOk;
}

// --- predict / curves / ellipse -----------------------------------------------

Eigen::VectorXd parse_grid(const std::string& text) {
  try {
    return parse_grid_spec(text);
  } catch (const Error& e) {
    usage(e.what());
  }
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) usage("--level must lie in (0, 1)");
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  check_level(a.level);
  const Eigen::VectorXd grid = parse_grid(a.grid);
  const json doc = load_fit(a.fit);
  const std::string model = doc.at("model");
  const json& r = doc.at("result");
  const PredictionBands bands = stage(kExitEstimation, [&] {
    if (model == "ols" || model == "wls") return predict_linear(linear_fit_from_json(r), grid, a.level);
    if (model == "harvey-mle") return harvey_predict(harvey_fit_from_json(r), grid, a.level);
    if (model == "harvey-bayes") return harvey_predict(harvey_posterior_from_json(r), grid, a.level);
    if (model == "bilinear") {
      const BilinearFit f = bilinear_fit_from_json(r);
      const double z = normal_quantile(0.5 * (1.0 + a.level));
      PredictionBands b;
      b.grid = grid;
      b.level = a.level;
      b.mean.resize(grid.size());
      b.sd.resize(grid.size());
      for (Eigen::Index i = 0; i < grid.size(); ++i) {
        b.mean[i] = f.predict(grid[i]);
        b.sd[i] = grid[i] <= f.theta_sa ? f.sigma1 : f.sigma2;
      }
      b.cred_lo = b.mean;
      b.cred_hi = b.mean;
      b.pred_lo = b.mean - z * b.sd;
      b.pred_hi = b.mean + z * b.sd;
      return b;
    }
    usage("predict supports ols, wls, bilinear, harvey-mle and harvey-bayes fits, not '" + model + "'");
  });
  emit(a.output, out, [&](std::ostream& o) { write_prediction_csv(o, bands); });
  write_csv_meta(a.output, csv_meta("predict", doc, a.fit, {{"grid", a.grid}, {"level", a.level}}));
  return kExitOk;
}

int cmd_curves(const CurvesArgs& a, std::ostream& out) {
  check_level(a.level);
  const Eigen::VectorXd grid = parse_grid(a.grid);
  const json doc = load_fit(a.fit);
  const std::string model = doc.at("model");
  const CorrelationCurves curves = stage(kExitEstimation, [&] {
    if (model == "covreg-em") return correlation_curves(covreg_fit_from_json(doc.at("result")), grid);
    if (model == "covreg-gibbs") {
      return correlation_curves(covreg_posterior_from_json(doc.at("result")), grid, a.level);
    }
    usage("curves needs a covreg-em or covreg-gibbs fit, not '" + model + "'");
  });
  emit(a.output, out, [&](std::ostream& o) { write_curves_csv(o, curves); });
  write_csv_meta(a.output, csv_meta("curves", doc, a.fit, {{"grid", a.grid}, {"level", a.level}}));
  return kExitOk;
}

std::pair<int, int> parse_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) usage("--pair must look like j,k");
  try {
    std::size_t used1 = 0;
    std::size_t used2 = 0;
    const int j = std::stoi(text.substr(0, comma), &used1);
    const int k = std::stoi(text.substr(comma + 1), &used2);
    if (used1 != comma || used2 != text.size() - comma - 1) usage("--pair must look like j,k");
    return {j - 1, k - 1};
  } catch (const std::logic_error&) {
    usage("--pair must look like j,k");
  }
}

int cmd_ellipse(const EllipseArgs& a, std::ostream& out) {
  check_level(a.level);
  if (a.at.empty()) usage("--at is required");
  if (a.space != "demand" && a.space != "residual") usage("--space must be demand or residual");
  const auto pair = parse_pair(a.pair);
  const json doc = load_fit(a.fit);
  const std::string model = doc.at("model");
  const auto space = a.space == "demand" ? EllipseSpace::kDemand : EllipseSpace::kResidual;
  const Eigen::Index p = doc.at("result").contains("A") ? matrix_from_json(doc.at("result").at("A")).rows()
                                                        : doc.at("result").value("p", Eigen::Index{0});
  if (pair.first < 0 || pair.second < 0 || pair.first >= p || pair.second >= p || pair.first == pair.second) {
    usage("--pair components must be distinct and lie in 1.." + std::to_string(p));
  }
  const std::vector<EllipseRow> rows = stage(kExitEstimation, [&] {
    std::vector<EllipseRow> out_rows;
    if (model == "covreg-em") {
      const CovRegFit f = covreg_fit_from_json(doc.at("result"));
      for (double x : a.at) out_rows.push_back({x, pair, prediction_ellipse(f, x, pair, a.level, space)});
    } else if (model == "covreg-gibbs") {
      const CovRegPosterior post = covreg_posterior_from_json(doc.at("result"));
      for (double x : a.at) out_rows.push_back({x, pair, prediction_ellipse(post, x, pair, a.level, space)});
    } else {
      usage("ellipse needs a covreg-em or covreg-gibbs fit, not '" + model + "'");
    }
    return out_rows;
  });
  emit(a.output, out, [&](std::ostream& o) { write_ellipse_csv(o, rows); });
  write_csv_meta(a.output, csv_meta("ellipse", doc, a.fit,
                                    {{"pair", a.pair}, {"level", a.level}, {"at", a.at}, {"space", a.space}}));
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heteroscedastic seismic demand models: generate, fit, test, predict.", "hetdemand"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.set_config("--config", "", "TOML/INI file mirroring the flags; flags win on conflict");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Synthetic multiple-stripe dataset on the 25-level grid");
  generate->add_option("--preset", gen.preset, "Truth preset: paper-like, harvey-trumpet, homoscedastic");
  generate->add_option("--truth", gen.truth, "Truth JSON file");
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--records", gen.records, "Records per level")->capture_default_str();
  generate->add_option("-o,--output", gen.output, "Output dataset CSV");

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "Fit a demand model");
  fitc->add_option("--model", fit.model, "ols, wls, bilinear, varfunc, mlr, harvey-mle, harvey-bayes, covreg-em, covreg-gibbs")
      ->required();
  fitc->add_option("--data", fit.data, "Dataset CSV");
  fitc->add_option("-o,--output", fit.output, "Result JSON");
  fitc->add_option("--draws", fit.draws, "Posterior draws CSV (Bayesian models)");
  fitc->add_option("--demand", fit.demand, "Demand component, 1-based (univariate models)")->capture_default_str();
  fitc->add_option("--degree", fit.degree, "Mean basis degree (default 1 for ols/wls/mlr, 3 otherwise)");
  fitc->add_option("--var-degree", fit.var_degree, "Log-variance basis degree (Harvey; default 3)");
  fitc->add_option("--rank", fit.rank, "Covariance regression rank")->capture_default_str();
  fitc->add_option("--chains", fit.chains, "MCMC chains (default 4 Harvey, 1 covreg)");
  fitc->add_option("--iters", fit.iters, "MCMC iterations per chain (default 5000 Harvey, 15000 covreg)");
  fitc->add_option("--thin", fit.thin, "Thinning factor")->capture_default_str();
  fitc->add_option("--burn-fraction", fit.burn_fraction, "Harvey burn-in fraction")->capture_default_str();
  fitc->add_option("--burn", fit.burn_draws, "Covreg burn-in, in thinned draws")->capture_default_str();
  fitc->add_option("--prior-variance", fit.prior_variance, "Harvey Normal prior variance")->capture_default_str();
  fitc->add_option("--nu0", fit.nu0, "Covreg inverse-Wishart dof (default p + 2)");
  fitc->add_option("--v0-scale", fit.v0_scale, "Covreg V0 = scale * I")->capture_default_str();
  fitc->add_option("--em-tol", fit.em_tol, "EM relative log-likelihood tolerance")->capture_default_str();
  fitc->add_option("--em-max-iter", fit.em_max_iter, "EM iteration cap")->capture_default_str();
  fitc->add_option("--seed", fit.seed, "Random seed");
  fitc->add_option("--weights", fit.weights, "WLS weights: stripe or varfunc")->capture_default_str();
  fitc->add_option("--scale", fit.scale, "Variance-function IM scale: natural or log")->capture_default_str();
  fitc->add_option("--divisor", fit.divisor, "MLR covariance divisor: unbiased or ml")->capture_default_str();

  TestArgs test;
  auto* testc = app.add_subcommand("test", "Heteroscedasticity test on a fit's residuals");
  testc->add_option("--method", test.method, "bp, bp-original, white, white-no-cross")->capture_default_str();
  testc->add_option("--fit", test.fit, "Fit JSON");
  testc->add_option("--data", test.data, "Dataset CSV");
  testc->add_option("--demand", test.demand, "Demand component, 1-based (default: the fit's)");
  testc->add_option("--aux-degree", test.aux_degree, "BP auxiliary basis degree")->capture_default_str();
  testc->add_option("-o,--output", test.output, "Result JSON (stdout if omitted)");

  PredictArgs pred;
  auto* predc = app.add_subcommand("predict", "Mean, credible and prediction bands over a grid");
  predc->add_option("--fit", pred.fit, "Fit JSON");
  predc->add_option("--grid", pred.grid, "start:stop:step in log-intensity")->capture_default_str();
  predc->add_option("--level", pred.level, "Band level")->capture_default_str();
  predc->add_option("-o,--output", pred.output, "CSV (stdout if omitted)");

  CurvesArgs curves;
  auto* curvc = app.add_subcommand("curves", "Correlation curves from a covariance regression fit");
  curvc->add_option("--fit", curves.fit, "Fit JSON");
  curvc->add_option("--grid", curves.grid, "start:stop:step in log-intensity")->capture_default_str();
  curvc->add_option("--level", curves.level, "Band level")->capture_default_str();
  curvc->add_option("-o,--output", curves.output, "CSV (stdout if omitted)");

  EllipseArgs ell;
  auto* ellc = app.add_subcommand("ellipse", "Prediction ellipses from a covariance regression fit");
  ellc->add_option("--fit", ell.fit, "Fit JSON");
  ellc->add_option("--pair", ell.pair, "Components j,k (1-based)")->capture_default_str();
  ellc->add_option("--level", ell.level, "Ellipse level")->capture_default_str();
  ellc->add_option("--at", ell.at, "Log-intensities (repeatable or comma-separated)")->delimiter(',')->allow_extra_args(false);
  ellc->add_option("--space", ell.space, "demand or residual")->capture_default_str();
  ellc->add_option("-o,--output", ell.output, "CSV (stdout if omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    if (*fitc) return cmd_fit(fit, out, err);
    if (*testc) return cmd_test(test, out, err);
    if (*predc) return cmd_predict(pred, out);
    if (*curvc) return cmd_curves(curves, out);
    if (*ellc) return cmd_ellipse(ell, out);
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kIo ? kExitIo : kExitEstimation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed document: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace hetdemand
