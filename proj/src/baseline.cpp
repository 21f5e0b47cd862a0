#include "hetdemand/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hetdemand/dataset.hpp"
#include "hetdemand/error.hpp"
#include "hetdemand/stochastics.hpp"
#include "linalg.hpp"

namespace hetdemand {
namespace {

void check_rows(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  if (y.size() != x.rows()) throw Error(ErrorCode::kInvalidArgument, "response/design row mismatch");
  if (!y.allFinite() || !x.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "non-finite regression input");
}

LinearFit finish_fit(const detail::LeastSquares& ls, double weighted_sse, Eigen::Index n, Eigen::Index k) {
  LinearFit fit;
  fit.coeffs = ls.coeffs;
  fit.n = n;
  fit.dof = n - k;
  fit.sse = weighted_sse;
  const double sigma2 = weighted_sse / static_cast<double>(fit.dof);
  fit.sigma = std::sqrt(sigma2);
  fit.param_cov = sigma2 * ls.xtx_inv;
  return fit;
}

// Type-7 empirical quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BreakFit {
  detail::LeastSquares ls;
  Eigen::Index n1 = 0;
  Eigen::Index n2 = 0;
};

BreakFit fit_at_break(const Eigen::VectorXd& y, const Eigen::VectorXd& x, double brk) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd design(n, 3);
  BreakFit out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] <= brk) {
      design.row(i) << 1.0, x[i], 0.0;
      ++out.n1;
    } else {
      design.row(i) << 1.0, brk, x[i] - brk;
      ++out.n2;
    }
  }
  if (out.n1 < 2 || out.n2 < 2) {
    throw Error(ErrorCode::kDegenerateBranch, "break at " + std::to_string(brk) + " leaves a branch with < 2 rows");
  }
  try {
    out.ls = detail::least_squares(design, y);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kRankDeficient) throw;
    throw Error(ErrorCode::kDegenerateBranch, "break at " + std::to_string(brk) + " leaves a branch without spread");
  }
  return out;
}

}  // namespace

LinearFit fit_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  check_rows(y, x);
  const auto ls = detail::least_squares(x, y);
  return finish_fit(ls, ls.sse, x.rows(), x.cols());
}

LinearFit fit_wls(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& weights) {
  check_rows(y, x);
  if (weights.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "weight count mismatch");
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw Error(ErrorCode::kNonPositiveWeight, "weight " + std::to_string(i) + " is not positive");
    }
  }
  const Eigen::VectorXd root = weights.cwiseSqrt();
  const auto ls = detail::least_squares(root.asDiagonal() * x, root.cwiseProduct(y));
  return finish_fit(ls, ls.sse, x.rows(), x.cols());
}

PredictionBands predict_linear(const LinearFit& fit, const Eigen::VectorXd& grid, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kDomainError, "level must lie in (0, 1)");
  const BasisConfig basis{static_cast<int>(fit.coeffs.size()) - 1, true};
  const double z = normal_quantile(0.5 * (1.0 + level));
  PredictionBands out;
  out.level = level;
  out.grid = grid;
  const Eigen::Index m = grid.size();
  out.mean.resize(m);
  out.sd = Eigen::VectorXd::Constant(m, fit.sigma);
  out.cred_lo.resize(m);
  out.cred_hi.resize(m);
  out.pred_lo.resize(m);
  out.pred_hi.resize(m);
  for (Eigen::Index g = 0; g < m; ++g) {
    const Eigen::VectorXd b = polynomial_basis(grid[g], basis);
    const double mu = b.dot(fit.coeffs);
    const double se2 = std::max(0.0, b.dot(fit.param_cov * b));
    const double cred = z * std::sqrt(se2);
    const double pred = z * std::sqrt(fit.sigma * fit.sigma + se2);
    out.mean[g] = mu;
    out.cred_lo[g] = mu - cred;
    out.cred_hi[g] = mu + cred;
    out.pred_lo[g] = mu - pred;
    out.pred_hi[g] = mu + pred;
  }
  return out;
}

double BilinearFit::predict(double x) const {
  return x <= theta_sa ? theta01 + theta11 * x : theta01 + theta11 * theta_sa + theta21 * (x - theta_sa);
}

std::vector<double> default_break_candidates(const Eigen::VectorXd& x) {
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const double lo = quantile_sorted(sorted, 0.1);
  const double hi = quantile_sorted(sorted, 0.9);
  std::vector<double> grid(81);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = lo + (hi - lo) * static_cast<double>(k) / 80.0;
  return grid;
}

BilinearFit fit_bilinear(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                         const std::optional<std::vector<double>>& candidates) {
  if (y.size() != x.size()) throw Error(ErrorCode::kInvalidArgument, "x/y length mismatch");
  if (x.size() < 5) throw Error(ErrorCode::kInsufficientData, "bilinear fit needs at least 5 rows");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "non-finite bilinear input");
  const bool user_grid = candidates.has_value();
  const std::vector<double> grid = user_grid ? *candidates : default_break_candidates(x);
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty break candidate grid");

  std::vector<std::size_t> valid;
  std::vector<BreakFit> fits;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    try {
      fits.push_back(fit_at_break(y, x, grid[k]));
      valid.push_back(k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateBranch || user_grid) throw;
    }
  }
  if (fits.empty()) throw Error(ErrorCode::kDegenerateBranch, "no break candidate leaves two rows per branch");

  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : fits) best = std::min(best, f.ls.sse);
  const double sst = (y.array() - y.mean()).square().sum();
  const double tie_tol = 1e-12 * (1.0 + sst);
  std::vector<std::size_t> tied;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].ls.sse <= best + tie_tol) tied.push_back(k);
  }
  const std::size_t pick = tied[(tied.size() - 1) / 2];
  const BreakFit& f = fits[pick];

  BilinearFit out;
  out.theta_sa = grid[valid[pick]];
  out.candidate_index = valid[pick];
  out.theta01 = f.ls.coeffs[0];
  out.theta11 = f.ls.coeffs[1];
  out.theta21 = f.ls.coeffs[2];
  out.n1 = f.n1;
  out.n2 = f.n2;
  out.sse = f.ls.sse;
  double ss1 = 0.0;
  double ss2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    (x[i] <= out.theta_sa ? ss1 : ss2) += f.ls.residuals[i] * f.ls.residuals[i];
  }
  out.sigma1 = std::sqrt(ss1 / static_cast<double>(out.n1));
  out.sigma2 = std::sqrt(ss2 / static_cast<double>(out.n2));
  return out;
}

double VarianceFunctionFit::predict(double log_im) const {
  const double im = scale == IntensityScale::kNatural ? std::exp(log_im) : log_im;
  return beta1 + beta2 * im + beta3 * im * im;
}

VarianceFunctionFit fit_variance_function(const Eigen::VectorXd& log_im, const Eigen::VectorXd& sigma,
                                          IntensityScale scale) {
  if (log_im.size() != sigma.size()) throw Error(ErrorCode::kInvalidArgument, "IM/sigma length mismatch");
  if (!log_im.allFinite() || !sigma.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "non-finite input");
  if ((sigma.array() < 0.0).any()) throw Error(ErrorCode::kInvalidArgument, "sigma values must be >= 0");
  std::vector<double> distinct(log_im.data(), log_im.data() + log_im.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw Error(ErrorCode::kRankDeficient, "variance function needs >= 3 distinct IM values");

  const Eigen::VectorXd im = scale == IntensityScale::kNatural ? Eigen::VectorXd(log_im.array().exp()) : log_im;
  Eigen::MatrixXd design(im.size(), 3);
  design.col(0).setOnes();
  design.col(1) = im;
  design.col(2) = im.cwiseAbs2();
  const auto ls = detail::least_squares(design, sigma, detail::RowRequirement::kSquareAllowed);

  VarianceFunctionFit fit;
  fit.beta1 = ls.coeffs[0];
  fit.beta2 = ls.coeffs[1];
  fit.beta3 = ls.coeffs[2];
  fit.scale = scale;
  fit.domain_min = im.minCoeff();
  fit.domain_max = im.maxCoeff();
  auto at = [&](double v) { return fit.beta1 + fit.beta2 * v + fit.beta3 * v * v; };
  double lowest = std::min(at(fit.domain_min), at(fit.domain_max));
  if (fit.beta3 != 0.0) {
    const double vertex = -fit.beta2 / (2.0 * fit.beta3);
    if (vertex > fit.domain_min && vertex < fit.domain_max) lowest = std::min(lowest, at(vertex));
  }
  fit.negative_prediction = lowest < 0.0;
  return fit;
}

MLRFit fit_mlr_design(const Eigen::MatrixXd& y, const Eigen::MatrixXd& x, CovDivisor divisor) {
  if (y.rows() != x.rows()) throw Error(ErrorCode::kInvalidArgument, "response/design row mismatch");
  if (y.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one response column");
  if (!y.allFinite() || !x.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "non-finite regression input");
  const auto ls = detail::least_squares_multi(x, y);
  MLRFit fit;
  fit.n = y.rows();
  fit.coeffs = ls.coeffs.transpose();
  const double denom =
      divisor == CovDivisor::kUnbiased ? static_cast<double>(y.rows() - x.cols()) : static_cast<double>(y.rows());
  fit.sigma = ls.residuals.transpose() * ls.residuals / denom;
  fit.sigma = 0.5 * (fit.sigma + fit.sigma.transpose()).eval();
  for (Eigen::Index j = 0; j < fit.sigma.rows() && !fit.singular_sigma; ++j) {
    for (Eigen::Index k = 0; k < fit.sigma.cols(); ++k) {
      const double vj = fit.sigma(j, j);
      const double vk = fit.sigma(k, k);
      if (vj <= 0.0 || vk <= 0.0 || (j != k && std::abs(fit.sigma(j, k)) >= (1.0 - 1e-10) * std::sqrt(vj * vk))) {
        fit.singular_sigma = true;
        break;
      }
    }
  }
  return fit;
}

MLRFit fit_mlr(const Eigen::MatrixXd& y, const Eigen::VectorXd& x, CovDivisor divisor) {
  if (x.size() < 3) throw Error(ErrorCode::kInsufficientData, "MLR needs at least 3 rows");
  return fit_mlr_design(y, design_matrix(x, BasisConfig{1}), divisor);
}

Eigen::VectorXd box_cox(const Eigen::VectorXd& y, double lambda) {
  if (!std::isfinite(lambda)) throw Error(ErrorCode::kInvalidArgument, "lambda must be finite");
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw Error(ErrorCode::kNonPositiveResponse, "Box-Cox needs strictly positive responses");
    const double ly = std::log(y[i]);
    out[i] = lambda == 0.0 ? ly : std::expm1(lambda * ly) / lambda;
  }
  return out;
}

double box_cox_profile_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, double lambda) {
  const Eigen::VectorXd z = box_cox(y, lambda);
  const auto ls = detail::least_squares(x, z);
  const auto n = static_cast<double>(y.size());
  return -0.5 * n * std::log(ls.sse / n) + (lambda - 1.0) * y.array().log().sum();
}

BoxCoxResult box_cox_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const std::vector<double>& grid) {
  std::vector<double> lambdas = grid;
  if (lambdas.empty()) {
    for (int k = 0; k <= 400; ++k) lambdas.push_back(-2.0 + 0.01 * k);
  }
  BoxCoxResult best;
  best.profile_loglik = -std::numeric_limits<double>::infinity();
  for (double lambda : lambdas) {
    const double ll = box_cox_profile_loglik(y, x, lambda);
    if (ll > best.profile_loglik) {
      best.profile_loglik = ll;
      best.lambda = lambda;
    }
  }
  best.transformed = box_cox(y, best.lambda);
  return best;
}

}  // namespace hetdemand
