#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hetdemand/prediction.hpp"

namespace hetdemand {

struct LinearFit {
  Eigen::VectorXd coeffs;
  double sigma = 0.0;        // sqrt(SSE / dof); weighted SSE for WLS
  Eigen::MatrixXd param_cov; // sigma^2 (X^T W X)^-1
  Eigen::Index n = 0;
  Eigen::Index dof = 0;
  double sse = 0.0;
};

// Requires n > columns(X) and smallest/largest singular value >= 1e-10.
LinearFit fit_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x);
LinearFit fit_wls(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& weights);

// Homoscedastic Gaussian bands for a polynomial-basis fit (degree implied by
// coeffs.size() - 1). Plug-in normal quantiles; the prediction half-width
// combines sigma and the mean's standard error.
PredictionBands predict_linear(const LinearFit& fit, const Eigen::VectorXd& grid, double level);

// --- Bilinear ---------------------------------------------------------------

struct BilinearFit {
  double theta01 = 0.0;   // first-branch intercept
  double theta11 = 0.0;   // first-branch slope
  double theta21 = 0.0;   // second-branch slope
  double theta_sa = 0.0;  // break on the log-intensity axis
  double sigma1 = 0.0;    // branch residual sd, divisor n_b
  double sigma2 = 0.0;
  Eigen::Index n1 = 0;    // rows with x <= theta_sa
  Eigen::Index n2 = 0;
  double sse = 0.0;
  std::size_t candidate_index = 0;

  [[nodiscard]] double predict(double x) const;
};

// Default break candidates: 81 equally spaced points between the empirical
// 10% and 90% quantiles of x.
std::vector<double> default_break_candidates(const Eigen::VectorXd& x);

// Continuous two-segment least squares, grid search over candidates. With
// the default grid, candidates leaving a branch with < 2 rows are skipped; a
// user-supplied grid containing such a candidate is DegenerateBranch. Exact
// SSE ties go to the middle tied candidate.
BilinearFit fit_bilinear(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                         const std::optional<std::vector<double>>& candidates = std::nullopt);

// --- Variance function ------------------------------------------------------

enum class IntensityScale { kNatural, kLog };

struct VarianceFunctionFit {
  double beta1 = 0.0, beta2 = 0.0, beta3 = 0.0;  // sigma = b1 + b2 IM + b3 IM^2
  IntensityScale scale = IntensityScale::kNatural;
  double domain_min = 0.0, domain_max = 0.0;     // on the fitted IM scale
  bool negative_prediction = false;              // sigma < 0 somewhere on the domain

  // Evaluates at a log-intensity (converted to the fitted scale).
  [[nodiscard]] double predict(double log_im) const;
};

// Inputs are log-intensities (internal representation); IM is exp(log_im)
// for kNatural.
VarianceFunctionFit fit_variance_function(const Eigen::VectorXd& log_im, const Eigen::VectorXd& sigma,
                                          IntensityScale scale = IntensityScale::kNatural);

// --- Multivariate linear regression -----------------------------------------

enum class CovDivisor { kUnbiased, kMaximumLikelihood };

struct MLRFit {
  Eigen::MatrixXd coeffs;  // p x k; column 0 intercepts, column 1 slopes
  Eigen::MatrixXd sigma;   // p x p residual covariance
  Eigen::Index n = 0;
  bool singular_sigma = false;  // some residual correlation is +-1

  [[nodiscard]] Eigen::VectorXd beta0() const { return coeffs.col(0); }
  [[nodiscard]] Eigen::VectorXd beta1() const { return coeffs.col(1); }
};

// Design (1, x); divisor n - 2 or n.
MLRFit fit_mlr(const Eigen::MatrixXd& y, const Eigen::VectorXd& x, CovDivisor divisor = CovDivisor::kUnbiased);
// Arbitrary design; unbiased divisor is n - columns(X).
MLRFit fit_mlr_design(const Eigen::MatrixXd& y, const Eigen::MatrixXd& x,
                      CovDivisor divisor = CovDivisor::kUnbiased);

// --- Box-Cox ----------------------------------------------------------------

struct BoxCoxResult {
  double lambda = 1.0;
  double profile_loglik = 0.0;
  Eigen::VectorXd transformed;
};

// (y^lambda - 1) / lambda, ln y at lambda = 0.
Eigen::VectorXd box_cox(const Eigen::VectorXd& y, double lambda);
// Profile log-likelihood of the linear model on the transformed response,
// Jacobian term included.
double box_cox_profile_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, double lambda);
// Grid defaults to -2..2 in steps of 0.01.
BoxCoxResult box_cox_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                              const std::vector<double>& grid = {});

}  // namespace hetdemand
