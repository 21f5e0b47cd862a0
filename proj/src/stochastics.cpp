#include "hetdemand/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hetdemand/error.hpp"

namespace hetdemand {
namespace {

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be a non-empty square matrix");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, std::string(what) + " is not positive definite");
  }
  return llt.matrixL();
}

// Lower-triangular Bartlett factor A with A A^T ~ Wishart(I, dof).
Eigen::MatrixXd bartlett_factor(Eigen::Index p, double dof, RngStream& rng) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return a;
}

void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::kDomainError, "probability must lie in (0, 1)");
}

}  // namespace

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, RngStream& rng) {
  if (cov.rows() != mean.size()) throw Error(ErrorCode::kInvalidArgument, "mean/cov dimension mismatch");
  return sample_mvn_chol(mean, lower_cholesky(cov, "covariance"), rng);
}

Eigen::VectorXd sample_mvn_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                                RngStream& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + chol_lower.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd sample_wishart(const Eigen::MatrixXd& scale, double dof, RngStream& rng) {
  const Eigen::Index p = scale.rows();
  if (!(dof > static_cast<double>(p) - 1.0)) {
    throw Error(ErrorCode::kInvalidDof, "Wishart degrees of freedom must exceed p - 1");
  }
  const Eigen::MatrixXd l = lower_cholesky(scale, "Wishart scale");
  const Eigen::MatrixXd t = l * bartlett_factor(p, dof, rng);
  Eigen::MatrixXd w = t * t.transpose();
  return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& psi0, double nu0, RngStream& rng,
                                       WishartDofCheck check) {
  const Eigen::Index p = psi0.rows();
  const double pd = static_cast<double>(p);
  if (check == WishartDofCheck::kRequireFiniteMean && !(nu0 > pd + 1.0)) {
    throw Error(ErrorCode::kInvalidDof, "inverse-Wishart mean requires nu0 > p + 1");
  }
  if (!(nu0 > pd - 1.0)) throw Error(ErrorCode::kInvalidDof, "inverse-Wishart requires nu0 > p - 1");

  // Precision = (L A)(L A)^T with L L^T = psi0^-1; the draw is its inverse.
  const Eigen::MatrixXd psi0_chol = lower_cholesky(psi0, "inverse-Wishart scale");
  const Eigen::MatrixXd psi0_inv =
      psi0_chol.triangularView<Eigen::Lower>().transpose().solve(
          psi0_chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p)));
  const Eigen::MatrixXd l = lower_cholesky(0.5 * (psi0_inv + psi0_inv.transpose()), "inverse scale");
  const Eigen::MatrixXd t = l * bartlett_factor(p, nu0, rng);
  const Eigen::MatrixXd t_inv = t.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd draw = t_inv.transpose() * t_inv;
  return 0.5 * (draw + draw.transpose());
}

Eigen::MatrixXd sample_matrix_normal(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& row_cov,
                                     const Eigen::MatrixXd& col_cov, RngStream& rng) {
  if (row_cov.rows() != mean.rows() || col_cov.rows() != mean.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "matrix-normal dimension mismatch");
  }
  const Eigen::MatrixXd lr = lower_cholesky(row_cov, "row covariance");
  const Eigen::MatrixXd lc = lower_cholesky(col_cov, "column covariance");
  Eigen::MatrixXd z(mean.rows(), mean.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
  }
  return mean + lr * z * lc.transpose();
}

// Series for x < a + 1, Lentz continued fraction for the complement otherwise.
double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw Error(ErrorCode::kDomainError, "regularized gamma needs a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x >= a + 1.0) return 1.0 - regularized_gamma_q(a, x);
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return std::exp(log_prefix) * sum;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw Error(ErrorCode::kDomainError, "regularized gamma needs a > 0, x >= 0");
  if (x < a + 1.0) return 1.0 - regularized_gamma_p(a, x);
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(a * std::log(x) - x - std::lgamma(a)) * h;
}

double chi2_cdf(double x, double dof) {
  if (!(dof > 0.0) || !(x >= 0.0)) throw Error(ErrorCode::kDomainError, "chi2_cdf needs x >= 0, k > 0");
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, double dof) {
  if (!(dof > 0.0) || !(x >= 0.0)) throw Error(ErrorCode::kDomainError, "chi2_sf needs x >= 0, k > 0");
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

namespace {

double chi2_log_pdf(double x, double dof) {
  const double h = 0.5 * dof;
  return (h - 1.0) * std::log(x) - 0.5 * x - h * std::numbers::ln2 - std::lgamma(h);
}

// Safeguarded Newton on a monotone increasing target(x) - goal; the bracket
// shrinks every step so the iteration cannot escape.
template <typename F>
double invert_monotone(F&& residual, double dof, double lo, double hi, double sign) {
  double x = std::clamp(dof, lo, hi);
  for (int it = 0; it < 400; ++it) {
    const double r = residual(x);
    if (r == 0.0) return x;
    if (sign * r > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double slope = sign * std::exp(chi2_log_pdf(x, dof));
    double next = x - r / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x) || hi - lo <= 1e-15 * hi) return next;
    x = next;
  }
  return x;
}

double upper_bracket(double dof) { return std::max(100.0, 20.0 * dof) + 2000.0; }

}  // namespace

double chi2_quantile(double p, double dof) {
  check_probability(p);
  if (!(dof > 0.0)) throw Error(ErrorCode::kDomainError, "chi2_quantile needs k > 0");
  if (dof == 2.0) return -2.0 * std::log1p(-p);
  return invert_monotone([&](double x) { return chi2_cdf(x, dof) - p; }, dof, 0.0, upper_bracket(dof), 1.0);
}

double chi2_upper_quantile(double q, double dof) {
  check_probability(q);
  if (!(dof > 0.0)) throw Error(ErrorCode::kDomainError, "chi2_upper_quantile needs k > 0");
  if (dof == 2.0) return -2.0 * std::log(q);
  return invert_monotone([&](double x) { return chi2_sf(x, dof) - q; }, dof, 0.0, upper_bracket(dof), -1.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  check_probability(p);
  // Acklam's rational approximation (relative error ~1e-9 before refinement).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; the tail residual uses erfc on the short side.
  const double e = (x < 0.0) ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - p
                             : -(0.5 * std::erfc(x / std::numbers::sqrt2) - (1.0 - p));
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace hetdemand
