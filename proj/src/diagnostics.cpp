#include "hetdemand/diagnostics.hpp"

#include <cmath>
#include <vector>

#include "hetdemand/error.hpp"
#include "hetdemand/stochastics.hpp"
#include "linalg.hpp"

namespace hetdemand {
namespace {

bool is_constant(const Eigen::VectorXd& c) { return (c.array() == c[0]).all(); }

bool same_column(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1.0);
}

struct AuxRegression {
  double r2 = 0.0;
  double explained_ss = 0.0;
};

// Regression of `target` on `z`; R^2 is 0 when the target is constant.
AuxRegression auxiliary(const Eigen::VectorXd& target, const Eigen::MatrixXd& z) {
  const auto ls = detail::least_squares(z, target);
  const double mean = target.mean();
  const double sst = (target.array() - mean).square().sum();
  AuxRegression out;
  if (sst > 0.0) {
    out.r2 = std::clamp(1.0 - ls.sse / sst, 0.0, 1.0);
    out.explained_ss = std::max(0.0, sst - ls.sse);
  }
  return out;
}

void check_inputs(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& z) {
  if (residuals.size() != z.rows()) throw Error(ErrorCode::kInvalidArgument, "residual/design row mismatch");
  if (!residuals.allFinite() || !z.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "non-finite test input");
  if (z.cols() < 2) throw Error(ErrorCode::kInvalidArgument, "auxiliary design needs a constant and a covariate");
  if (z.rows() <= z.cols()) throw Error(ErrorCode::kInsufficientData, "need more rows than auxiliary columns");
  bool has_constant = false;
  for (Eigen::Index j = 0; j < z.cols() && !has_constant; ++j) {
    has_constant = is_constant(z.col(j)) && z(0, j) != 0.0;
  }
  if (!has_constant) throw Error(ErrorCode::kInvalidArgument, "auxiliary design must include a constant column");
  if (residuals.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorCode::kZeroResidualVariance, "all residuals are zero; the test is undefined");
  }
}

TestResult finish(double statistic, Eigen::Index columns, std::string variant) {
  TestResult r;
  r.statistic = statistic;
  r.dof = static_cast<int>(columns - 1);
  r.p_value = chi2_sf(statistic, r.dof);
  r.variant = std::move(variant);
  return r;
}

}  // namespace

TestResult breusch_pagan(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& z, BreuschPaganVariant variant) {
  check_inputs(residuals, z);
  const auto n = static_cast<double>(residuals.size());
  const Eigen::VectorXd sq = residuals.cwiseAbs2();
  if (variant == BreuschPaganVariant::kStudentized) {
    return finish(n * auxiliary(sq, z).r2, z.cols(), "studentized");
  }
  const Eigen::VectorXd g = sq / (sq.sum() / n);
  return finish(0.5 * auxiliary(g, z).explained_ss, z.cols(), "original");
}

Eigen::MatrixXd white_auxiliary_design(const Eigen::MatrixXd& x, bool cross_products) {
  std::vector<Eigen::VectorXd> covariates;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd c = x.col(j);
    if (is_constant(c)) continue;
    bool dup = false;
    for (const auto& existing : covariates) dup = dup || same_column(existing, c);
    if (!dup) covariates.push_back(c);
  }
  std::vector<Eigen::VectorXd> columns{Eigen::VectorXd::Ones(x.rows())};
  auto add = [&](const Eigen::VectorXd& c) {
    for (const auto& existing : columns) {
      if (same_column(existing, c)) return;
    }
    columns.push_back(c);
  };
  for (const auto& c : covariates) add(c);
  for (std::size_t a = 0; a < covariates.size(); ++a) {
    for (std::size_t b = a; b < (cross_products ? covariates.size() : a + 1); ++b) add(covariates[a].cwiseProduct(covariates[b]));
  }
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = columns[k];
  return out;
}

TestResult white_test(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& x, bool cross_products) {
  const Eigen::MatrixXd aux = white_auxiliary_design(x, cross_products);
  check_inputs(residuals, aux);
  const auto n = static_cast<double>(residuals.size());
  return finish(n * auxiliary(residuals.cwiseAbs2(), aux).r2, aux.cols(),
                cross_products ? "with-cross-products" : "without-cross-products");
}

}  // namespace hetdemand
