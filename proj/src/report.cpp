#include "hetdemand/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hetdemand/error.hpp"

namespace hetdemand {
namespace {

using nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json diagnostics_json(const ChainDiagnostics& d) {
  return {{"r_hat", number(d.r_hat)}, {"ess", number(d.ess)}, {"mcse", number(d.mcse)}};
}

ChainDiagnostics diagnostics_from(const json& j) {
  return {number_from(j.at("r_hat")), number_from(j.at("ess")), number_from(j.at("mcse"))};
}

std::string pair_label(int j, int k) { return std::to_string(j + 1) + "_" + std::to_string(k + 1); }

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed ") + what + " document: " + e.what());
  }
}

}  // namespace

std::string_view tool_version() { return HETDEMAND_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_label(std::uint64_t hash) {
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return hash_label(fnv1a64(buffer.str()));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::kInvalidArgument, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = number_from(row.at(static_cast<std::size_t>(c)));
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = number_from(j.at(static_cast<std::size_t>(i)));
  return v;
}

json to_json(const LinearFit& fit) {
  return {{"coeffs", to_json(fit.coeffs)}, {"sigma", number(fit.sigma)}, {"param_cov", to_json(fit.param_cov)},
          {"n", fit.n}, {"dof", fit.dof}, {"sse", number(fit.sse)}};
}

LinearFit linear_fit_from_json(const json& j) {
  return guarded("linear fit", [&] {
    LinearFit f;
    f.coeffs = vector_from_json(j.at("coeffs"));
    f.sigma = number_from(j.at("sigma"));
    f.param_cov = matrix_from_json(j.at("param_cov"));
    f.n = j.at("n").get<Eigen::Index>();
    f.dof = j.at("dof").get<Eigen::Index>();
    f.sse = number_from(j.at("sse"));
    return f;
  });
}

json to_json(const BilinearFit& fit) {
  return {{"theta01", number(fit.theta01)}, {"theta11", number(fit.theta11)}, {"theta21", number(fit.theta21)},
          {"theta_sa", number(fit.theta_sa)}, {"sigma1", number(fit.sigma1)}, {"sigma2", number(fit.sigma2)},
          {"n1", fit.n1}, {"n2", fit.n2}, {"sse", number(fit.sse)}, {"candidate_index", fit.candidate_index}};
}

BilinearFit bilinear_fit_from_json(const json& j) {
  return guarded("bilinear fit", [&] {
    BilinearFit f;
    f.theta01 = number_from(j.at("theta01"));
    f.theta11 = number_from(j.at("theta11"));
    f.theta21 = number_from(j.at("theta21"));
    f.theta_sa = number_from(j.at("theta_sa"));
    f.sigma1 = number_from(j.at("sigma1"));
    f.sigma2 = number_from(j.at("sigma2"));
    f.n1 = j.at("n1").get<Eigen::Index>();
    f.n2 = j.at("n2").get<Eigen::Index>();
    f.sse = number_from(j.at("sse"));
    f.candidate_index = j.at("candidate_index").get<std::size_t>();
    return f;
  });
}

json to_json(const VarianceFunctionFit& fit) {
  return {{"beta1", number(fit.beta1)},
          {"beta2", number(fit.beta2)},
          {"beta3", number(fit.beta3)},
          {"scale", fit.scale == IntensityScale::kNatural ? "natural" : "log"},
          {"domain", {number(fit.domain_min), number(fit.domain_max)}},
          {"negative_prediction", fit.negative_prediction}};
}

json to_json(const MLRFit& fit) {
  return {{"coeffs", to_json(fit.coeffs)}, {"beta0", to_json(Eigen::VectorXd(fit.beta0()))},
          {"beta1", to_json(Eigen::VectorXd(fit.beta1()))}, {"Sigma", to_json(fit.sigma)},
          {"n", fit.n}, {"singular_sigma", fit.singular_sigma}};
}

json to_json(const TestResult& r) {
  return {{"statistic", number(r.statistic)}, {"dof", r.dof}, {"p_value", number(r.p_value)}, {"variant", r.variant}};
}

json to_json(const HarveyFit& fit) {
  return {{"spec", {{"mean_degree", fit.spec.mean_degree}, {"var_degree", fit.spec.var_degree}}},
          {"beta", to_json(fit.beta)},
          {"gamma", to_json(fit.gamma)},
          {"loglik", number(fit.loglik)},
          {"iterations", fit.iterations},
          {"converged", fit.converged},
          {"beta_cov", to_json(fit.beta_cov)},
          {"gamma_cov", to_json(fit.gamma_cov)},
          {"n", fit.n}};
}

HarveyFit harvey_fit_from_json(const json& j) {
  return guarded("Harvey fit", [&] {
    HarveyFit f;
    f.spec.mean_degree = j.at("spec").at("mean_degree").get<int>();
    f.spec.var_degree = j.at("spec").at("var_degree").get<int>();
    f.beta = vector_from_json(j.at("beta"));
    f.gamma = vector_from_json(j.at("gamma"));
    f.loglik = number_from(j.at("loglik"));
    f.iterations = j.at("iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.beta_cov = matrix_from_json(j.at("beta_cov"));
    f.gamma_cov = matrix_from_json(j.at("gamma_cov"));
    f.n = j.at("n").get<Eigen::Index>();
    return f;
  });
}

json to_json(const HarveyPosterior& post) {
  json summaries = json::array();
  for (const auto& s : post.summaries) {
    json d = diagnostics_json(s.diagnostics);
    d["name"] = s.name;
    d["mean"] = number(s.mean);
    d["sd"] = number(s.sd);
    summaries.push_back(std::move(d));
  }
  json chains = json::array();
  for (const auto& c : post.chains) chains.push_back(to_json(c));
  return {{"spec", {{"mean_degree", post.spec.mean_degree}, {"var_degree", post.spec.var_degree}}},
          {"priors", {{"variance", post.priors.variance}}},
          {"protocol",
           {{"chains", post.protocol.chains},
            {"iterations", post.protocol.iterations},
            {"thin", post.protocol.thin},
            {"burn_in_fraction", post.protocol.burn_in_fraction}}},
          {"seed", post.seed},
          {"parameters", post.parameter_names},
          {"summaries", summaries},
          {"acceptance_rate", post.acceptance_rate},
          {"not_converged", post.not_converged},
          {"draw_iterations", post.draw_iterations},
          {"draws", chains}};
}

HarveyPosterior harvey_posterior_from_json(const json& j) {
  return guarded("Harvey posterior", [&] {
    HarveyPosterior p;
    p.spec.mean_degree = j.at("spec").at("mean_degree").get<int>();
    p.spec.var_degree = j.at("spec").at("var_degree").get<int>();
    p.priors.variance = j.at("priors").at("variance").get<double>();
    const auto& pr = j.at("protocol");
    p.protocol.chains = pr.at("chains").get<int>();
    p.protocol.iterations = pr.at("iterations").get<int>();
    p.protocol.thin = pr.at("thin").get<int>();
    p.protocol.burn_in_fraction = pr.at("burn_in_fraction").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.parameter_names = j.at("parameters").get<std::vector<std::string>>();
    for (const auto& s : j.at("summaries")) {
      p.summaries.push_back(
          {s.at("name").get<std::string>(), number_from(s.at("mean")), number_from(s.at("sd")), diagnostics_from(s)});
    }
    p.acceptance_rate = j.at("acceptance_rate").get<std::vector<double>>();
    p.not_converged = j.at("not_converged").get<bool>();
    p.draw_iterations = j.at("draw_iterations").get<std::vector<int>>();
    for (const auto& c : j.at("draws")) p.chains.push_back(matrix_from_json(c));
    return p;
  });
}

json to_json(const CovRegFit& fit) {
  json bs = json::array();
  for (const auto& b : fit.B) bs.push_back(to_json(b));
  return {{"spec", {{"rank", fit.spec.rank}, {"basis_degree", fit.spec.basis_degree}}},
          {"A", to_json(fit.A)},
          {"B", bs},
          {"Psi", to_json(fit.Psi)},
          {"loglik", number(fit.loglik)},
          {"iterations", fit.iterations},
          {"converged", fit.converged}};
}

CovRegFit covreg_fit_from_json(const json& j) {
  return guarded("covariance regression fit", [&] {
    CovRegFit f;
    f.spec.rank = j.at("spec").at("rank").get<int>();
    f.spec.basis_degree = j.at("spec").at("basis_degree").get<int>();
    f.A = matrix_from_json(j.at("A"));
    for (const auto& b : j.at("B")) f.B.push_back(matrix_from_json(b));
    f.Psi = matrix_from_json(j.at("Psi"));
    f.loglik = number_from(j.at("loglik"));
    f.iterations = j.at("iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    return f;
  });
}

json to_json(const CovRegPosterior& post) {
  json summaries = json::array();
  for (const auto& s : post.summaries) {
    json d = diagnostics_json(s.diagnostics);
    d["name"] = s.name;
    d["mean"] = number(s.mean);
    d["sd"] = number(s.sd);
    summaries.push_back(std::move(d));
  }
  json draws = json::array();
  for (std::size_t d = 0; d < post.draws.size(); ++d) {
    draws.push_back({{"chain", post.draw_chain[d]},
                     {"iteration", post.draw_iterations[d]},
                     {"C", to_json(post.draws[d].C)},
                     {"Psi", to_json(post.draws[d].Psi)}});
  }
  return {{"spec", {{"rank", post.spec.rank}, {"basis_degree", post.spec.basis_degree}}},
          {"p", post.p},
          {"q", post.q},
          {"priors",
           {{"Psi0", to_json(post.priors.Psi0)},
            {"nu0", post.priors.nu0},
            {"C0", to_json(post.priors.C0)},
            {"V0", to_json(post.priors.V0)}}},
          {"protocol",
           {{"iterations", post.protocol.iterations},
            {"thin", post.protocol.thin},
            {"burn_in_draws", post.protocol.burn_in_draws},
            {"chains", post.protocol.chains}}},
          {"seed", post.seed},
          {"summaries", summaries},
          {"not_converged", post.not_converged},
          {"draws", draws}};
}

CovRegPosterior covreg_posterior_from_json(const json& j) {
  return guarded("covariance regression posterior", [&] {
    CovRegPosterior p;
    p.spec.rank = j.at("spec").at("rank").get<int>();
    p.spec.basis_degree = j.at("spec").at("basis_degree").get<int>();
    p.p = j.at("p").get<Eigen::Index>();
    p.q = j.at("q").get<Eigen::Index>();
    const auto& pr = j.at("priors");
    p.priors.Psi0 = matrix_from_json(pr.at("Psi0"));
    p.priors.nu0 = pr.at("nu0").get<double>();
    p.priors.C0 = matrix_from_json(pr.at("C0"));
    p.priors.V0 = matrix_from_json(pr.at("V0"));
    const auto& pc = j.at("protocol");
    p.protocol.iterations = pc.at("iterations").get<int>();
    p.protocol.thin = pc.at("thin").get<int>();
    p.protocol.burn_in_draws = pc.at("burn_in_draws").get<int>();
    p.protocol.chains = pc.at("chains").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("summaries")) {
      p.summaries.push_back(
          {s.at("name").get<std::string>(), number_from(s.at("mean")), number_from(s.at("sd")), diagnostics_from(s)});
    }
    p.not_converged = j.at("not_converged").get<bool>();
    for (const auto& d : j.at("draws")) {
      p.draw_chain.push_back(d.at("chain").get<int>());
      p.draw_iterations.push_back(d.at("iteration").get<int>());
      p.draws.push_back({matrix_from_json(d.at("C")), matrix_from_json(d.at("Psi"))});
    }
    return p;
  });
}

json make_document(const Provenance& prov, json spec, json result, const std::vector<std::string>& warnings) {
  json doc;
  doc["tool"] = kToolName;
  doc["version"] = tool_version();
  doc["command"] = prov.command;
  doc["model"] = prov.model;
  doc["seed"] = prov.seed;
  doc["input"] = {{"path", prov.input_path}, {"hash", prov.input_hash}};
  doc["spec"] = std::move(spec);
  doc["warnings"] = warnings;
  doc["result"] = std::move(result);
  return doc;
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_prediction_csv(std::ostream& out, const PredictionBands& b) {
  out << "grid_x,mean,sd,cred_lo,cred_hi,pred_lo,pred_hi\n";
  for (Eigen::Index i = 0; i < b.grid.size(); ++i) {
    out << format_double(b.grid[i]) << ',' << format_double(b.mean[i]) << ',' << format_double(b.sd[i]) << ','
        << format_double(b.cred_lo[i]) << ',' << format_double(b.cred_hi[i]) << ',' << format_double(b.pred_lo[i])
        << ',' << format_double(b.pred_hi[i]) << '\n';
  }
}

void write_curves_csv(std::ostream& out, const CorrelationCurves& c) {
  out << "grid_x";
  for (const auto& [j, k] : c.pairs) {
    const std::string tag = "rho_" + pair_label(j, k);
    out << ',' << tag << "_median," << tag << "_lo," << tag << "_hi";
  }
  out << '\n';
  for (Eigen::Index g = 0; g < c.grid.size(); ++g) {
    out << format_double(c.grid[g]);
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(c.pairs.size()); ++p) {
      out << ',' << format_double(c.median(g, p)) << ',' << format_double(c.lower(g, p)) << ','
          << format_double(c.upper(g, p));
    }
    out << '\n';
  }
}

void write_ellipse_csv(std::ostream& out, const std::vector<EllipseRow>& rows) {
  out << "ln_im,pair_j,pair_k,level,chi2,center_1,center_2,semi_major,semi_minor,angle\n";
  for (const auto& r : rows) {
    const auto& e = r.ellipse;
    out << format_double(r.ln_im) << ',' << r.pair.first + 1 << ',' << r.pair.second + 1 << ','
        << format_double(e.level) << ',' << format_double(e.chi2) << ',' << format_double(e.center[0]) << ','
        << format_double(e.center[1]) << ',' << format_double(e.semi_axes[0]) << ','
        << format_double(e.semi_axes[1]) << ',' << format_double(e.angle) << '\n';
  }
}

void write_draws_csv(std::ostream& out, const HarveyPosterior& post) {
  out << "chain,iteration";
  for (const auto& name : post.parameter_names) out << ',' << name;
  out << '\n';
  for (std::size_t c = 0; c < post.chains.size(); ++c) {
    const auto& m = post.chains[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out << c + 1 << ',' << post.draw_iterations.at(static_cast<std::size_t>(r));
      for (Eigen::Index k = 0; k < m.cols(); ++k) out << ',' << format_double(m(r, k));
      out << '\n';
    }
  }
}

void write_draws_csv(std::ostream& out, const CovRegPosterior& post) {
  const Eigen::Index p = post.p;
  const Eigen::Index q = post.q;
  out << "chain,iteration";
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < q; ++k) out << ",A_" << j + 1 << '_' << k + 1;
  }
  for (int b = 0; b < post.spec.rank; ++b) {
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = 0; k < q; ++k) out << ",B" << b + 1 << '_' << j + 1 << '_' << k + 1;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < p; ++k) out << ",Psi_" << j + 1 << '_' << k + 1;
  }
  out << '\n';
  for (std::size_t d = 0; d < post.draws.size(); ++d) {
    out << post.draw_chain[d] + 1 << ',' << post.draw_iterations[d];
    const auto& c = post.draws[d].C;
    for (int block = 0; block <= post.spec.rank; ++block) {
      for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < q; ++k) out << ',' << format_double(c(j, block * q + k));
      }
    }
    const auto& psi = post.draws[d].Psi;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = 0; k < p; ++k) out << ',' << format_double(psi(j, k));
    }
    out << '\n';
  }
}

}  // namespace hetdemand
