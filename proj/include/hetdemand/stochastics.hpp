#pragma once

#include <Eigen/Dense>

#include "hetdemand/rng.hpp"

namespace hetdemand {

// --- Sampling -------------------------------------------------------------

// mean + L z with L the lower Cholesky factor of cov. Throws
// NotPositiveDefinite when the factorization fails.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, RngStream& rng);

// Same draw from an already-factored covariance (lower triangle of chol_lower is used).
Eigen::VectorXd sample_mvn_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                                RngStream& rng);

// Wishart(scale, dof) by the Bartlett decomposition.
Eigen::MatrixXd sample_wishart(const Eigen::MatrixXd& scale, double dof, RngStream& rng);

enum class WishartDofCheck { kRequireFiniteMean, kProperOnly };

// Inverse-Wishart parameterized as W^-1(psi0^-1, nu0): the precision is
// Wishart(psi0^-1, nu0) and the draw has expectation psi0 / (nu0 - p - 1).
// With kRequireFiniteMean, nu0 <= p + 1 is InvalidDof; kProperOnly only
// demands nu0 > p - 1.
Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& psi0, double nu0, RngStream& rng,
                                       WishartDofCheck check = WishartDofCheck::kRequireFiniteMean);

// M + Lr Z Lc^T, Z with i.i.d. standard normal entries; vec(draw) has
// covariance col_cov (x) row_cov.
Eigen::MatrixXd sample_matrix_normal(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& row_cov,
                                     const Eigen::MatrixXd& col_cov, RngStream& rng);

// --- Special functions ------------------------------------------------------

double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

double chi2_cdf(double x, double dof);
// Upper tail 1 - cdf, computed directly from Q for tail accuracy.
double chi2_sf(double x, double dof);
double chi2_quantile(double p, double dof);
// Inverse of chi2_sf: the x with upper-tail probability q.
double chi2_upper_quantile(double q, double dof);

double normal_cdf(double z);
// Rational approximation refined with one Halley step; |error| < 1e-9 on (0, 1).
double normal_quantile(double p);

}  // namespace hetdemand
