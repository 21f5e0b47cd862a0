#include "hetdemand/synth.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hetdemand/covreg.hpp"
#include "hetdemand/error.hpp"
#include "hetdemand/rng.hpp"

namespace hetdemand {
namespace {

using nlohmann::json;

int degree_of(const Eigen::VectorXd& v, const char* what) {
  if (v.size() < 1) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be non-empty");
  if (!v.allFinite()) throw Error(ErrorCode::kNonFiniteValue, std::string(what) + " must be finite");
  return static_cast<int>(v.size()) - 1;
}

void check_multivariate(const MultivariateTruth& t) {
  const Eigen::Index p = t.A.rows();
  if (p < 1 || t.A.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "A must be non-empty");
  if (t.Psi.rows() != p || t.Psi.cols() != p) throw Error(ErrorCode::kInvalidArgument, "Psi must be p x p");
  for (const auto& b : t.B) {
    if (b.rows() != p || b.cols() != t.A.cols()) throw Error(ErrorCode::kInvalidArgument, "every B must match A");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(t.Psi).info() != Eigen::Success || !t.Psi.isApprox(t.Psi.transpose())) {
    throw Error(ErrorCode::kNotPositiveDefinite, "truth Psi is not positive definite");
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::kInvalidArgument, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<std::string> component_labels(Eigen::Index p) {
  if (p == 1) return {"edp"};
  std::vector<std::string> labels;
  for (Eigen::Index j = 0; j < p; ++j) labels.push_back("edp" + std::to_string(j + 1));
  return labels;
}

}  // namespace

Eigen::VectorXd ScalingGrid::ln_sa() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(levels.size()));
  for (std::size_t i = 0; i < levels.size(); ++i) out[static_cast<Eigen::Index>(i)] = levels[i].ln_sa;
  return out;
}

ScalingGrid table1_grid(int records_per_level) {
  if (records_per_level < 1) throw Error(ErrorCode::kInvalidArgument, "records_per_level must be >= 1");
  ScalingGrid grid;
  grid.records_per_level = records_per_level;
  for (int k = 0; k < 25; ++k) {
    const double ln_sa = (static_cast<double>(k) - 23.0) / 10.0;
    grid.levels.push_back({ln_sa, std::exp(ln_sa)});
  }
  return grid;
}

double UnivariateTruth::mean(double x) const {
  return polynomial_basis(x, {degree_of(beta, "beta"), true}).dot(beta);
}

double UnivariateTruth::sd(double x) const {
  return std::exp(0.5 * polynomial_basis(x, {degree_of(gamma, "gamma"), true}).dot(gamma));
}

Eigen::VectorXd MultivariateTruth::mean(double x) const { return A * polynomial_basis(x, {basis_degree(), true}); }

Eigen::MatrixXd MultivariateTruth::covariance(double x) const { return covariance_at(Psi, B, x, basis_degree()); }

Eigen::MatrixXd MultivariateTruth::correlation(double x) const { return covariance_to_correlation(covariance(x)); }

DemandDataset generate_univariate(const UnivariateTruth& truth, const ScalingGrid& grid, std::uint64_t seed) {
  const int mean_degree = degree_of(truth.beta, "beta");
  const int var_degree = degree_of(truth.gamma, "gamma");
  RngStream rng(seed, 0);
  const Eigen::Index n = grid.rows();
  Eigen::VectorXd x(n);
  Eigen::MatrixXd y(n, 1);
  Eigen::Index row = 0;
  for (const auto& level : grid.levels) {
    const double mu = polynomial_basis(level.ln_sa, {mean_degree, true}).dot(truth.beta);
    const double sd = std::exp(0.5 * polynomial_basis(level.ln_sa, {var_degree, true}).dot(truth.gamma));
    for (int r = 0; r < grid.records_per_level; ++r, ++row) {
      x[row] = level.ln_sa;
      y(row, 0) = mu + sd * rng.normal();
    }
  }
  return {std::move(x), std::move(y), component_labels(1), "ln_sa"};
}

DemandDataset generate_multivariate(const MultivariateTruth& truth, const ScalingGrid& grid, std::uint64_t seed,
                                    MultivariateSampling sampling) {
  check_multivariate(truth);
  const Eigen::Index p = truth.A.rows();
  const auto rank = static_cast<Eigen::Index>(truth.B.size());
  const Eigen::MatrixXd psi_chol = Eigen::LLT<Eigen::MatrixXd>(truth.Psi).matrixL();
  RngStream rng(seed, 0);
  const Eigen::Index n = grid.rows();
  Eigen::VectorXd x(n);
  Eigen::MatrixXd y(n, p);
  Eigen::Index row = 0;
  for (const auto& level : grid.levels) {
    const Eigen::VectorXd basis = polynomial_basis(level.ln_sa, {truth.basis_degree(), true});
    const Eigen::VectorXd mu = truth.A * basis;
    Eigen::MatrixXd h(p, rank);
    for (Eigen::Index k = 0; k < rank; ++k) h.col(k) = truth.B[static_cast<std::size_t>(k)] * basis;
    Eigen::MatrixXd sigma_chol;
    if (sampling == MultivariateSampling::kMarginal) {
      const Eigen::LLT<Eigen::MatrixXd> llt(truth.Psi + h * h.transpose());
      if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPositiveDefinite, "Sigma_x is not PD");
      sigma_chol = llt.matrixL();
    }
    for (int r = 0; r < grid.records_per_level; ++r, ++row) {
      x[row] = level.ln_sa;
      Eigen::VectorXd v(p);
      if (sampling == MultivariateSampling::kRandomEffects) {
        Eigen::VectorXd g(rank);
        for (Eigen::Index k = 0; k < rank; ++k) g[k] = rng.normal();
        Eigen::VectorXd e(p);
        for (Eigen::Index j = 0; j < p; ++j) e[j] = rng.normal();
        v = mu + h * g + psi_chol * e;
      } else {
        Eigen::VectorXd e(p);
        for (Eigen::Index j = 0; j < p; ++j) e[j] = rng.normal();
        v = mu + sigma_chol * e;
      }
      y.row(row) = v.transpose();
    }
  }
  return {std::move(x), std::move(y), component_labels(p), "ln_sa"};
}

std::vector<std::string> truth_preset_names() { return {"paper-like", "harvey-trumpet", "homoscedastic"}; }

SyntheticTruth truth_preset(const std::string& name) {
  SyntheticTruth t;
  t.name = name;
  if (name == "harvey-trumpet" || name == "homoscedastic") {
    UnivariateTruth u;
    u.beta = Eigen::Vector4d(0.5, 1.2, 0.1, -0.05);
    u.gamma = name == "harvey-trumpet" ? Eigen::Vector4d(-2.0, 0.8, 0.0, 0.0)
                                       : Eigen::Vector4d(2.0 * std::log(0.3), 0.0, 0.0, 0.0);
    t.univariate = u;
    return t;
  }
  if (name == "paper-like") {
    // Rank 3: a common factor, a factor shared by components 1 and 3 that
    // fades at mid intensity, and one acting on component 2 alone.
    MultivariateTruth m;
    m.A.resize(3, 4);
    m.A << 0.5, 1.2, 0.1, -0.05,
           0.3, 1.1, 0.05, -0.04,
           0.5, 1.2, 0.1, -0.05;
    Eigen::MatrixXd b1(3, 4);
    b1 << 0.2943, 0.0802, 0.0, 0.0,
          0.2943, 0.0802, 0.0, 0.0,
          0.2943, 0.0802, 0.0, 0.0;
    Eigen::MatrixXd b2(3, 4);
    b2 << -0.0742, -1.011, -0.9109, -0.2097,
          0.0, 0.0, 0.0, 0.0,
          -0.0705, -0.9605, -0.8653, -0.1992;
    Eigen::MatrixXd b3(3, 4);
    b3 << 0.0, 0.0, 0.0, 0.0,
          0.1649, -0.3291, -0.3376, -0.0713,
          0.0, 0.0, 0.0, 0.0;
    m.B = {b1, b2, b3};
    m.Psi.resize(3, 3);
    m.Psi << 0.00567, 0.002835, 0.005103,
             0.002835, 0.00567, 0.002835,
             0.005103, 0.002835, 0.00567;
    t.multivariate = m;
    return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown truth preset '" + name + "'");
}

DemandDataset generate(const SyntheticTruth& truth, const ScalingGrid& grid, std::uint64_t seed) {
  if (truth.univariate) return generate_univariate(*truth.univariate, grid, seed);
  if (truth.multivariate) return generate_multivariate(*truth.multivariate, grid, seed);
  throw Error(ErrorCode::kInvalidArgument, "truth holds no model");
}

std::string truth_to_json(const SyntheticTruth& truth) {
  json doc;
  doc["name"] = truth.name;
  if (truth.univariate) {
    doc["kind"] = "univariate";
    doc["beta"] = vector_json(truth.univariate->beta);
    doc["gamma"] = vector_json(truth.univariate->gamma);
  } else if (truth.multivariate) {
    doc["kind"] = "multivariate";
    doc["A"] = matrix_json(truth.multivariate->A);
    json bs = json::array();
    for (const auto& b : truth.multivariate->B) bs.push_back(matrix_json(b));
    doc["B"] = bs;
    doc["Psi"] = matrix_json(truth.multivariate->Psi);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "truth holds no model");
  }
  return doc.dump(2) + "\n";
}

SyntheticTruth truth_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    SyntheticTruth t;
    t.name = doc.value("name", std::string("custom"));
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "univariate") {
      t.univariate = UnivariateTruth{vector_from_json(doc.at("beta")), vector_from_json(doc.at("gamma"))};
      degree_of(t.univariate->beta, "beta");
      degree_of(t.univariate->gamma, "gamma");
    } else if (kind == "multivariate") {
      MultivariateTruth m;
      m.A = matrix_from_json(doc.at("A"));
      for (const auto& b : doc.at("B")) m.B.push_back(matrix_from_json(b));
      m.Psi = matrix_from_json(doc.at("Psi"));
      check_multivariate(m);
      t.multivariate = m;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "truth kind must be univariate or multivariate");
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed truth JSON: ") + e.what());
  }
}

void save_truth_file(const std::filesystem::path& path, const SyntheticTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << truth_to_json(truth);
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

SyntheticTruth load_truth_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return truth_from_json(buffer.str());
}

}  // namespace hetdemand
