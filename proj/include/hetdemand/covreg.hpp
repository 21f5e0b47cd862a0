#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hetdemand/chain_diagnostics.hpp"
#include "hetdemand/dataset.hpp"

namespace hetdemand {

// Rank-r covariance regression: y = A x + sum_k gamma_k B_k x + eps with
// gamma ~ N(0, I_r) and eps ~ N(0, Psi), so that
// Sigma_x = Psi + sum_k (B_k x)(B_k x)^T.
struct CovRegSpec {
  int rank = 3;
  int basis_degree = 3;
};

struct CovRegFit {
  CovRegSpec spec;
  Eigen::MatrixXd A;               // p x q
  std::vector<Eigen::MatrixXd> B;  // r matrices, p x q
  Eigen::MatrixXd Psi;             // p x p
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;  // initial value followed by one entry per iteration
  Eigen::MatrixXd latent_scores;     // n x r conditional means of gamma_i (empty if not requested)
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index p() const { return A.rows(); }
  [[nodiscard]] Eigen::Index q() const { return A.cols(); }
};

struct EmOptions {
  double tolerance = 1e-9;  // relative log-likelihood change
  int max_iterations = 100000;
  std::uint64_t seed = 0;   // seeds the symmetry-breaking start of B
  double init_sd = 0.1;     // B entries start as Normal(0, init_sd^2)
  bool latent_scores = false;
};

// Throws InsufficientData when n < p + q (r + 1), NotConverged after
// max_iterations, PsiNotPD when a Psi update fails Cholesky twice.
CovRegFit fit_covreg_em(const DemandDataset& data, const CovRegSpec& spec, const EmOptions& options = {});

// Semi-conjugate prior on C = (A, B_1, ..., B_r): C | Psi ~ MN(C0, Psi, V0) and
// Psi ~ W^-1(Psi0, nu0), so E[Psi] = Psi0 / (nu0 - p - 1).
struct CovRegPriors {
  Eigen::MatrixXd Psi0;
  double nu0 = 0.0;
  Eigen::MatrixXd C0;  // p x q(r+1)
  Eigen::MatrixXd V0;  // q(r+1) x q(r+1)
};

inline constexpr double kDefaultV0Scale = 1000.0;

// Psi0 = rank-0 residual covariance (divisor n), nu0 = p + 2, C0 = 0,
// V0 = kDefaultV0Scale * I.
CovRegPriors default_covreg_priors(const DemandDataset& data, const CovRegSpec& spec);

struct GibbsProtocol {
  int iterations = 15000;
  int thin = 10;
  int burn_in_draws = 200;  // dropped after thinning
  int chains = 1;
  bool parallel = true;
};

struct CovRegDraw {
  Eigen::MatrixXd C;    // (A, B_1, ..., B_r), p x q(r+1)
  Eigen::MatrixXd Psi;
};

struct ScalarSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  ChainDiagnostics diagnostics;  // r_hat is NaN with a single chain
};

struct CovRegPosterior {
  CovRegSpec spec;
  CovRegPriors priors;
  GibbsProtocol protocol;
  std::uint64_t seed = 0;
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  std::vector<CovRegDraw> draws;  // chain-major
  std::vector<int> draw_chain;
  std::vector<int> draw_iterations;
  std::vector<ScalarSummary> summaries;
  bool not_converged = false;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::MatrixXd A(std::size_t draw) const;
  [[nodiscard]] Eigen::MatrixXd B(std::size_t draw, int k) const;
};

// Blocked Gibbs: latent gamma_i | C, Psi, then (Psi, C) | gamma drawn
// jointly as Psi from its C-marginal inverse-Wishart and C | Psi matrix
// normal. Chains start from the EM estimate and use RngStream(seed, chain).
CovRegPosterior fit_covreg_gibbs(const DemandDataset& data, const CovRegSpec& spec, const CovRegPriors& priors,
                                 const GibbsProtocol& protocol, std::uint64_t seed);

Eigen::MatrixXd covariance_at(const CovRegFit& fit, double x);
Eigen::VectorXd mean_at(const CovRegFit& fit, double x);
// Same quantities from raw parameters; B may be empty.
Eigen::MatrixXd covariance_at(const Eigen::MatrixXd& psi, const std::vector<Eigen::MatrixXd>& b, double x,
                              int basis_degree);
Eigen::MatrixXd covariance_at(const CovRegPosterior& posterior, std::size_t draw, double x);
// Posterior predictive moments: mean of A x, and E[Sigma_x] + Cov(A x).
Eigen::VectorXd predictive_mean(const CovRegPosterior& posterior, double x);
Eigen::MatrixXd predictive_covariance(const CovRegPosterior& posterior, double x);

Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& cov);

struct CorrelationCurves {
  Eigen::VectorXd grid;
  std::vector<std::pair<int, int>> pairs;  // 0-based (j, k), j < k
  Eigen::MatrixXd median;                  // grid x pairs
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
  double level = 0.9;
};

CorrelationCurves correlation_curves(const CovRegPosterior& posterior, const Eigen::VectorXd& grid, double level);
// Point-estimate curves; the band collapses onto the curve.
CorrelationCurves correlation_curves(const CovRegFit& fit, const Eigen::VectorXd& grid);

struct Ellipse {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d semi_axes = Eigen::Vector2d::Zero();  // major, minor
  double angle = 0.0;                                   // major axis, radians in (-pi/2, pi/2]
  double level = 0.9;
  double chi2 = 0.0;
  Eigen::Matrix2d shape = Eigen::Matrix2d::Identity();  // S

  [[nodiscard]] bool contains(const Eigen::Vector2d& v) const;
  [[nodiscard]] double area() const;
};

// chi-square(2) quantile in closed form: -2 ln(1 - level).
double chi2_2_quantile(double level);

// Level set (v - c)^T S^-1 (v - c) = chi2_2(level). DegenerateSubmatrix when
// S is not positive definite.
Ellipse ellipse_from_covariance(const Eigen::Matrix2d& s, const Eigen::Vector2d& center, double level);

enum class EllipseSpace { kResidual, kDemand };

Ellipse prediction_ellipse(const CovRegFit& fit, double x, std::pair<int, int> pair, double level,
                           EllipseSpace space = EllipseSpace::kDemand);
Ellipse prediction_ellipse(const CovRegPosterior& posterior, double x, std::pair<int, int> pair, double level,
                           EllipseSpace space = EllipseSpace::kDemand);

}  // namespace hetdemand
