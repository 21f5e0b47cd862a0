#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdemand/chain_diagnostics.hpp"
#include "hetdemand/dataset.hpp"
#include "hetdemand/prediction.hpp"

namespace hetdemand {

// y_i ~ N(x_i^T beta, exp(z_i^T gamma)) with polynomial bases in the
// log-intensity; z always includes the constant.
struct HarveySpec {
  int mean_degree = 3;
  int var_degree = 3;
};

// Exact Gaussian log-likelihood and its analytic gradient for one response.
class HarveyModel {
 public:
  HarveyModel(Eigen::VectorXd y, const Eigen::VectorXd& x, const HarveySpec& spec);

  [[nodiscard]] double loglik(const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) const;
  // Gradient stacked as (d/dbeta, d/dgamma).
  [[nodiscard]] Eigen::VectorXd score(const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) const;

  [[nodiscard]] const Eigen::VectorXd& y() const { return y_; }
  [[nodiscard]] const Eigen::MatrixXd& mean_design() const { return x_; }
  [[nodiscard]] const Eigen::MatrixXd& var_design() const { return z_; }
  [[nodiscard]] const HarveySpec& spec() const { return spec_; }

 private:
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd z_;
  HarveySpec spec_;
};

struct MleOptions {
  double tolerance = 1e-8;        // relative log-likelihood change
  double score_tolerance = 1e-7;  // max-norm of the gradient at convergence
  int max_iterations = 500;
};

struct HarveyFit {
  HarveySpec spec;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  // Log-likelihood after initialization and after every half-step.
  std::vector<double> loglik_trace;
  Eigen::MatrixXd beta_cov;   // (X^T W X)^-1 at the optimum
  Eigen::MatrixXd gamma_cov;  // 2 (Z^T Z)^-1
  Eigen::Index n = 0;
};

// Alternates WLS for beta (weights exp(-z^T gamma)) with a full Fisher-scoring
// fit of the gamma regression on squared residuals. Throws InsufficientData
// when n < mean_degree + var_degree + 4, NotConverged at the iteration cap.
HarveyFit fit_harvey_mle(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec = {},
                         const MleOptions& options = {});
HarveyFit fit_harvey_mle(const DemandDataset& data, Eigen::Index demand_index, const HarveySpec& spec = {},
                         const MleOptions& options = {});

// Independent N(0, variance) on every beta and gamma coefficient.
struct HarveyPriors {
  double variance = 100.0;
};

struct McmcProtocol {
  int chains = 4;
  int iterations = 5000;
  int thin = 10;
  double burn_in_fraction = 0.5;
  bool parallel = true;  // results are identical either way
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  ChainDiagnostics diagnostics;
};

struct HarveyPosterior {
  HarveySpec spec;
  HarveyPriors priors;
  McmcProtocol protocol;
  std::uint64_t seed = 0;
  // One matrix per chain: retained draws x (beta..., gamma...).
  std::vector<Eigen::MatrixXd> chains;
  // Iteration index (1-based, within the chain) of every retained draw.
  std::vector<int> draw_iterations;
  std::vector<std::string> parameter_names;
  std::vector<ParameterSummary> summaries;
  std::vector<double> acceptance_rate;  // gamma block, after burn-in, per chain
  bool not_converged = false;           // some R-hat >= 1.05 or MCSE >= 0.05
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index n_beta() const { return spec.mean_degree + 1; }
  [[nodiscard]] Eigen::Index n_gamma() const { return spec.var_degree + 1; }
  [[nodiscard]] Eigen::MatrixXd pooled() const;
  [[nodiscard]] Eigen::VectorXd posterior_mean() const;
};

inline constexpr double kRhatThreshold = 1.05;
inline constexpr double kMcseThreshold = 0.05;

// Metropolis-within-Gibbs: beta | gamma drawn exactly from its Gaussian full
// conditional; gamma by random-walk Metropolis with a 2 (Z^T Z)^-1 shaped
// proposal whose scale adapts toward 30% acceptance during burn-in only.
// Chain c uses RngStream(seed, c).
HarveyPosterior fit_harvey_bayes(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec,
                                 const HarveyPriors& priors, const McmcProtocol& protocol, std::uint64_t seed);
HarveyPosterior fit_harvey_bayes(const DemandDataset& data, Eigen::Index demand_index, const HarveySpec& spec,
                                 const HarveyPriors& priors, const McmcProtocol& protocol, std::uint64_t seed);

// Plug-in bands: mean x^T beta, sd exp(z^T gamma / 2); the credible band uses
// beta_cov and the prediction band sqrt(sd^2 + se^2).
PredictionBands harvey_predict(const HarveyFit& fit, const Eigen::VectorXd& grid, double level);
// Posterior bands: equal-tailed quantiles of x^T beta draws, and quantiles of
// the Gaussian mixture over draws for a new observation.
PredictionBands harvey_predict(const HarveyPosterior& posterior, const Eigen::VectorXd& grid, double level);

}  // namespace hetdemand
