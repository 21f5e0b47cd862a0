#include "linalg.hpp"

#include "hetdemand/error.hpp"

namespace hetdemand::detail {
namespace {

Eigen::JacobiSVD<Eigen::MatrixXd> checked_svd(const Eigen::MatrixXd& x,
                                              RowRequirement rows = RowRequirement::kPositiveDof) {
  const bool too_few = rows == RowRequirement::kPositiveDof ? x.rows() <= x.cols() : x.rows() < x.cols();
  if (too_few) {
    throw Error(ErrorCode::kInsufficientData, "need more rows (" + std::to_string(x.rows()) +
                                                  ") than coefficients (" + std::to_string(x.cols()) + ")");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (!(s.size() > 0 && s[s.size() - 1] >= kRankTolerance * s[0]) || !(s[0] > 0.0)) {
    throw Error(ErrorCode::kRankDeficient, "design matrix is rank-deficient");
  }
  return svd;
}

}  // namespace

LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, RowRequirement rows) {
  const auto svd = checked_svd(x, rows);
  const Eigen::VectorXd inv_s = svd.singularValues().cwiseInverse();
  LeastSquares out;
  out.coeffs = svd.matrixV() * (inv_s.asDiagonal() * (svd.matrixU().transpose() * y));
  out.residuals = y - x * out.coeffs;
  out.sse = out.residuals.squaredNorm();
  out.xtx_inv = svd.matrixV() * inv_s.cwiseAbs2().asDiagonal() * svd.matrixV().transpose();
  return out;
}

MultiLeastSquares least_squares_multi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const auto svd = checked_svd(x);
  const Eigen::VectorXd inv_s = svd.singularValues().cwiseInverse();
  MultiLeastSquares out;
  out.coeffs = svd.matrixV() * (inv_s.asDiagonal() * (svd.matrixU().transpose() * y));
  out.residuals = y - x * out.coeffs;
  out.xtx_inv = svd.matrixV() * inv_s.cwiseAbs2().asDiagonal() * svd.matrixV().transpose();
  return out;
}

bool robust_cholesky(const Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>& llt, double jitter_scale) {
  llt.compute(m);
  if (llt.info() == Eigen::Success) return true;
  const double jitter = jitter_scale * m.trace() / static_cast<double>(m.rows());
  llt.compute(m + jitter * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  return llt.info() == Eigen::Success;
}

}  // namespace hetdemand::detail
