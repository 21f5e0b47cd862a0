#pragma once

// Internal least-squares kernels shared by the estimators.

#include <Eigen/Dense>

namespace hetdemand::detail {

// Smallest/largest singular value ratio below which a design is rank-deficient.
inline constexpr double kRankTolerance = 1e-10;

struct LeastSquares {
  Eigen::VectorXd coeffs;
  Eigen::VectorXd residuals;
  double sse = 0.0;
  Eigen::MatrixXd xtx_inv;  // (X^T X)^-1 of the (possibly row-scaled) design
};

enum class RowRequirement { kPositiveDof, kSquareAllowed };

// SVD-based least squares; throws RankDeficient per kRankTolerance and
// InsufficientData when there are too few rows for `rows`.
LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           RowRequirement rows = RowRequirement::kPositiveDof);

// Multi-response version: one SVD, every column of y solved at once.
struct MultiLeastSquares {
  Eigen::MatrixXd coeffs;     // k x p
  Eigen::MatrixXd residuals;  // n x p
  Eigen::MatrixXd xtx_inv;
};
MultiLeastSquares least_squares_multi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

// LLT with one diagonal jitter retry; returns false when both attempts fail.
bool robust_cholesky(const Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>& llt, double jitter_scale);

}  // namespace hetdemand::detail
