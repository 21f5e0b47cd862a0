#include "hetdemand/harvey.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

#include "hetdemand/error.hpp"
#include "hetdemand/rng.hpp"
#include "hetdemand/stochastics.hpp"
#include "linalg.hpp"

namespace hetdemand {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void validate_spec(const HarveySpec& spec) {
  if (spec.mean_degree < 0 || spec.var_degree < 0) throw Error(ErrorCode::kInvalidArgument, "degrees must be >= 0");
}

void check_data(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec) {
  validate_spec(spec);
  if (y.size() != x.size()) throw Error(ErrorCode::kInvalidArgument, "x/y length mismatch");
  const Eigen::Index needed = spec.mean_degree + spec.var_degree + 4;
  if (y.size() < needed) {
    throw Error(ErrorCode::kInsufficientData,
                std::to_string(y.size()) + " rows; the Harvey model needs at least " + std::to_string(needed));
  }
  if (x.minCoeff() == x.maxCoeff()) throw Error(ErrorCode::kInsufficientData, "all intensities are equal");
}

// Fisher-scoring maximization of the gamma part of the log-likelihood for
// fixed squared residuals; the objective is strictly concave in gamma.
Eigen::VectorXd maximize_gamma(const Eigen::MatrixXd& z, const Eigen::VectorXd& sq_resid, Eigen::VectorXd gamma,
                               const Eigen::MatrixXd& ztz_inv) {
  auto objective = [&](const Eigen::VectorXd& g) {
    const Eigen::VectorXd eta = z * g;
    return -0.5 * (eta.sum() + (sq_resid.array() * (-eta.array()).exp()).sum());
  };
  double current = objective(gamma);
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd eta = z * gamma;
    const Eigen::VectorXd u = (sq_resid.array() * (-eta.array()).exp() - 1.0).matrix();
    const Eigen::VectorXd step = ztz_inv * (z.transpose() * u);
    // Near the optimum the gain drops below rounding; a full step is still safe there.
    const double slack = 1e-13 * (1.0 + std::abs(current));
    double t = 1.0;
    Eigen::VectorXd cand = gamma + step;
    double value = objective(cand);
    while (!(value >= current - slack) && t > 1e-10) {
      t *= 0.5;
      cand = gamma + t * step;
      value = objective(cand);
    }
    if (!(value >= current - slack)) break;
    gamma = cand;
    current = std::max(current, value);
    if (t * step.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + gamma.cwiseAbs().maxCoeff())) break;
  }
  return gamma;
}

// Per distinct intensity: count, response mean, within sum of squares and bases.
struct GroupedData {
  Eigen::VectorXd count;
  Eigen::VectorXd ybar;
  Eigen::VectorXd within_ss;
  Eigen::MatrixXd xb;  // L x kb
  Eigen::MatrixXd zb;  // L x kg
};

GroupedData group_by_intensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec) {
  std::map<double, std::vector<double>> groups;
  for (Eigen::Index i = 0; i < x.size(); ++i) groups[x[i]].push_back(y[i]);
  const auto levels = static_cast<Eigen::Index>(groups.size());
  GroupedData g;
  g.count.resize(levels);
  g.ybar.resize(levels);
  g.within_ss.resize(levels);
  g.xb.resize(levels, spec.mean_degree + 1);
  g.zb.resize(levels, spec.var_degree + 1);
  Eigen::Index l = 0;
  for (const auto& [xv, ys] : groups) {
    double mean = 0.0;
    for (double v : ys) mean += v;
    mean /= static_cast<double>(ys.size());
    double ss = 0.0;
    for (double v : ys) ss += (v - mean) * (v - mean);
    g.count[l] = static_cast<double>(ys.size());
    g.ybar[l] = mean;
    g.within_ss[l] = ss;
    g.xb.row(l) = polynomial_basis(xv, {spec.mean_degree, true}).transpose();
    g.zb.row(l) = polynomial_basis(xv, {spec.var_degree, true}).transpose();
    ++l;
  }
  return g;
}

struct ChainResult {
  Eigen::MatrixXd draws;
  std::vector<int> iterations;
  double acceptance = 0.0;
};

class HarveySampler {
 public:
  HarveySampler(const GroupedData& data, const HarveyPriors& priors, const McmcProtocol& protocol)
      : d_(data), prior_precision_(1.0 / priors.variance), protocol_(protocol) {
    const Eigen::MatrixXd ztz = d_.zb.transpose() * d_.count.asDiagonal() * d_.zb;
    const Eigen::MatrixXd shape = 2.0 * ztz.inverse();
    proposal_chol_ = Eigen::LLT<Eigen::MatrixXd>(0.5 * (shape + shape.transpose())).matrixL();
  }

  ChainResult run(const Eigen::VectorXd& beta0, const Eigen::VectorXd& gamma0, RngStream& rng) const {
    const Eigen::Index kb = d_.xb.cols();
    const Eigen::Index kg = d_.zb.cols();
    const int burn = static_cast<int>(std::floor(protocol_.burn_in_fraction * protocol_.iterations));
    const int kept = (protocol_.iterations - burn) / protocol_.thin;

    ChainResult out;
    out.draws.resize(kept, kb + kg);
    out.iterations.reserve(static_cast<std::size_t>(kept));

    Eigen::VectorXd beta = beta0;
    Eigen::VectorXd gamma = gamma0;
    Eigen::VectorXd sq = residual_ss(beta);
    double log_post = gamma_log_post(gamma, sq);
    double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(kg)));
    int accepted_after_burn = 0;
    int row = 0;

    for (int t = 0; t < protocol_.iterations; ++t) {
      beta = draw_beta(gamma, rng);
      sq = residual_ss(beta);
      log_post = gamma_log_post(gamma, sq);

      Eigen::VectorXd z(kg);
      for (Eigen::Index k = 0; k < kg; ++k) z[k] = rng.normal();
      const Eigen::VectorXd proposal = gamma + std::exp(log_scale) * (proposal_chol_ * z);
      const double proposal_post = gamma_log_post(proposal, sq);
      const double log_u = std::log(rng.uniform());
      const bool accept = log_u < proposal_post - log_post;
      if (accept) {
        gamma = proposal;
        log_post = proposal_post;
      }
      if (t < burn) {
        // Robbins-Monro on the log proposal scale toward 30% acceptance.
        log_scale += ((accept ? 1.0 : 0.0) - 0.3) / std::pow(t + 1.0, 0.6);
      } else {
        accepted_after_burn += accept ? 1 : 0;
        if ((t - burn + 1) % protocol_.thin == 0 && row < kept) {
          out.draws.row(row).head(kb) = beta.transpose();
          out.draws.row(row).tail(kg) = gamma.transpose();
          out.iterations.push_back(t + 1);
          ++row;
        }
      }
    }
    const int post = protocol_.iterations - burn;
    out.acceptance = post > 0 ? static_cast<double>(accepted_after_burn) / post : 0.0;
    return out;
  }

 private:
  // Per-level residual sum of squares sum_i (y_i - x^T beta)^2.
  Eigen::VectorXd residual_ss(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd mu = d_.xb * beta;
    return d_.within_ss.array() + d_.count.array() * (d_.ybar - mu).array().square();
  }

  double gamma_log_post(const Eigen::VectorXd& gamma, const Eigen::VectorXd& sq) const {
    const Eigen::VectorXd eta = d_.zb * gamma;
    const double ll = -0.5 * (d_.count.dot(eta) + (sq.array() * (-eta.array()).exp()).sum());
    return ll - 0.5 * prior_precision_ * gamma.squaredNorm();
  }

  Eigen::VectorXd draw_beta(const Eigen::VectorXd& gamma, RngStream& rng) const {
    const Eigen::VectorXd w = d_.count.array() * (-(d_.zb * gamma).array()).exp();
    Eigen::MatrixXd precision = d_.xb.transpose() * w.asDiagonal() * d_.xb;
    precision.diagonal().array() += prior_precision_;
    const Eigen::VectorXd rhs = d_.xb.transpose() * w.cwiseProduct(d_.ybar);
    const Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPositiveDefinite, "beta precision is not PD");
    const Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    // L^-T z has covariance (L L^T)^-1.
    return mean + llt.matrixU().solve(z);
  }

  const GroupedData& d_;
  double prior_precision_;
  McmcProtocol protocol_;
  Eigen::MatrixXd proposal_chol_;
};

double type7_quantile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Quantile of the equal-weight Gaussian mixture sum_s N(mu_s, sd_s^2) / S.
double mixture_quantile(const std::vector<double>& mu, const std::vector<double>& sd, double q) {
  auto cdf = [&](double v) {
    double s = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) s += normal_cdf((v - mu[k]) / sd[k]);
    return s / static_cast<double>(mu.size());
  };
  const double zq = normal_quantile(q);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    lo = std::min(lo, mu[k] + zq * sd[k]);
    hi = std::max(hi, mu[k] + zq * sd[k]);
  }
  // Each component's q-quantile brackets the mixture's.
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

HarveyModel::HarveyModel(Eigen::VectorXd y, const Eigen::VectorXd& x, const HarveySpec& spec)
    : y_(std::move(y)),
      x_(design_matrix(x, {spec.mean_degree, true})),
      z_(design_matrix(x, {spec.var_degree, true})),
      spec_(spec) {
  validate_spec(spec);
  if (y_.size() != x.size()) throw Error(ErrorCode::kInvalidArgument, "x/y length mismatch");
}

double HarveyModel::loglik(const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) const {
  const Eigen::ArrayXd eta = (z_ * gamma).array();
  const Eigen::ArrayXd e = (y_ - x_ * beta).array();
  return (-kHalfLog2Pi - 0.5 * eta - 0.5 * e.square() * (-eta).exp()).sum();
}

Eigen::VectorXd HarveyModel::score(const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma) const {
  const Eigen::ArrayXd w = (-(z_ * gamma).array()).exp();
  const Eigen::ArrayXd e = (y_ - x_ * beta).array();
  Eigen::VectorXd g(x_.cols() + z_.cols());
  g.head(x_.cols()) = x_.transpose() * (e * w).matrix();
  g.tail(z_.cols()) = 0.5 * (z_.transpose() * (e.square() * w - 1.0).matrix());
  return g;
}

HarveyFit fit_harvey_mle(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec,
                         const MleOptions& options) {
  check_data(y, x, spec);
  const HarveyModel model(y, x, spec);
  const Eigen::MatrixXd& xd = model.mean_design();
  const Eigen::MatrixXd& zd = model.var_design();
  const auto n = static_cast<double>(y.size());
  const Eigen::MatrixXd ztz_inv = detail::least_squares(zd, Eigen::VectorXd::Zero(zd.rows())).xtx_inv;

  HarveyFit fit;
  fit.spec = spec;
  fit.n = y.size();
  const auto ols = detail::least_squares(xd, y);
  fit.beta = ols.coeffs;
  fit.gamma = Eigen::VectorXd::Zero(zd.cols());
  fit.gamma[0] = std::log(ols.sse / n);
  double ll = model.loglik(fit.beta, fit.gamma);
  fit.loglik_trace.push_back(ll);

  for (int it = 1; it <= options.max_iterations; ++it) {
    const double previous = ll;
    const Eigen::VectorXd root_w = (-0.5 * (zd * fit.gamma).array()).exp().matrix();
    fit.beta = detail::least_squares(root_w.asDiagonal() * xd, root_w.cwiseProduct(y)).coeffs;
    fit.loglik_trace.push_back(model.loglik(fit.beta, fit.gamma));

    const Eigen::VectorXd sq = (y - xd * fit.beta).cwiseAbs2();
    fit.gamma = maximize_gamma(zd, sq, fit.gamma, ztz_inv);
    ll = model.loglik(fit.beta, fit.gamma);
    fit.loglik_trace.push_back(ll);
    fit.iterations = it;

    const double change = std::abs(ll - previous) / std::max(1.0, std::abs(ll));
    if (change < options.tolerance &&
        model.score(fit.beta, fit.gamma).cwiseAbs().maxCoeff() <= options.score_tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "Harvey MLE did not converge in " + std::to_string(options.max_iterations) + " iterations");
  }
  fit.loglik = ll;
  const Eigen::VectorXd w = (-(zd * fit.gamma).array()).exp().matrix();
  fit.beta_cov = (xd.transpose() * w.asDiagonal() * xd).inverse();
  fit.gamma_cov = 2.0 * ztz_inv;
  return fit;
}

HarveyFit fit_harvey_mle(const DemandDataset& data, Eigen::Index demand_index, const HarveySpec& spec,
                         const MleOptions& options) {
  return fit_harvey_mle(data.demand(demand_index), data.x(), spec, options);
}

Eigen::MatrixXd HarveyPosterior::pooled() const {
  Eigen::Index rows = 0;
  for (const auto& c : chains) rows += c.rows();
  Eigen::MatrixXd out(rows, n_beta() + n_gamma());
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    out.middleRows(r, c.rows()) = c;
    r += c.rows();
  }
  return out;
}

Eigen::VectorXd HarveyPosterior::posterior_mean() const { return pooled().colwise().mean().transpose(); }

HarveyPosterior fit_harvey_bayes(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const HarveySpec& spec,
                                 const HarveyPriors& priors, const McmcProtocol& protocol, std::uint64_t seed) {
  check_data(y, x, spec);
  if (protocol.chains < 1 || protocol.iterations < 1 || protocol.thin < 1 ||
      !(protocol.burn_in_fraction >= 0.0 && protocol.burn_in_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid MCMC protocol");
  }
  if (!(priors.variance > 0.0)) throw Error(ErrorCode::kInvalidArgument, "prior variance must be positive");

  const GroupedData grouped = group_by_intensity(y, x, spec);
  const HarveySampler sampler(grouped, priors, protocol);
  const Eigen::MatrixXd xd = design_matrix(x, {spec.mean_degree, true});
  const Eigen::MatrixXd zd = design_matrix(x, {spec.var_degree, true});
  const auto ols = detail::least_squares(xd, y);
  const double sigma2 = ols.sse / static_cast<double>(y.size() - xd.cols());
  const Eigen::MatrixXd beta_spread = (4.0 * sigma2 * ols.xtx_inv).llt().matrixL();
  const Eigen::MatrixXd gamma_spread =
      (8.0 * detail::least_squares(zd, Eigen::VectorXd::Zero(zd.rows())).xtx_inv).llt().matrixL();
  Eigen::VectorXd gamma_center = Eigen::VectorXd::Zero(zd.cols());
  gamma_center[0] = std::log(ols.sse / static_cast<double>(y.size()));

  const auto n_chains = static_cast<std::size_t>(protocol.chains);
  std::vector<ChainResult> results(n_chains);
  auto run_chain = [&](std::size_t c) {
    RngStream rng(seed, c);
    // Over-dispersed starts: two standard errors around the OLS-based point.
    const Eigen::VectorXd beta0 = sample_mvn_chol(ols.coeffs, beta_spread, rng);
    const Eigen::VectorXd gamma0 = sample_mvn_chol(gamma_center, gamma_spread, rng);
    results[c] = sampler.run(beta0, gamma0, rng);
  };
  if (protocol.parallel && n_chains > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < n_chains; ++c) workers.emplace_back(run_chain, c);
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) run_chain(c);
  }

  HarveyPosterior post;
  post.spec = spec;
  post.priors = priors;
  post.protocol = protocol;
  post.seed = seed;
  for (auto& r : results) {
    post.chains.push_back(std::move(r.draws));
    post.acceptance_rate.push_back(r.acceptance);
  }
  post.draw_iterations = results.front().iterations;
  for (Eigen::Index k = 0; k < post.n_beta(); ++k) post.parameter_names.push_back("beta" + std::to_string(k));
  for (Eigen::Index k = 0; k < post.n_gamma(); ++k) post.parameter_names.push_back("gamma" + std::to_string(k));

  const Eigen::MatrixXd all = post.pooled();
  for (Eigen::Index k = 0; k < all.cols(); ++k) {
    ParameterSummary s;
    s.name = post.parameter_names[static_cast<std::size_t>(k)];
    s.mean = all.col(k).mean();
    s.sd = std::sqrt((all.col(k).array() - s.mean).square().sum() / std::max<double>(1.0, all.rows() - 1.0));
    std::vector<std::vector<double>> per_chain;
    for (const auto& c : post.chains) per_chain.emplace_back(c.col(k).data(), c.col(k).data() + c.rows());
    if (per_chain.front().size() >= 4) {
      s.diagnostics = diagnose(per_chain);
      const bool bad = !(s.diagnostics.r_hat < kRhatThreshold) || !(s.diagnostics.mcse < kMcseThreshold);
      if (bad) {
        post.not_converged = true;
        post.warnings.push_back("NotConverged: " + s.name + " r_hat=" + std::to_string(s.diagnostics.r_hat) +
                                " mcse=" + std::to_string(s.diagnostics.mcse));
      }
    } else {
      post.not_converged = true;
      post.warnings.push_back("NotConverged: too few retained draws for diagnostics");
    }
    post.summaries.push_back(std::move(s));
  }
  return post;
}

HarveyPosterior fit_harvey_bayes(const DemandDataset& data, Eigen::Index demand_index, const HarveySpec& spec,
                                 const HarveyPriors& priors, const McmcProtocol& protocol, std::uint64_t seed) {
  return fit_harvey_bayes(data.demand(demand_index), data.x(), spec, priors, protocol, seed);
}

PredictionBands harvey_predict(const HarveyFit& fit, const Eigen::VectorXd& grid, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kDomainError, "level must lie in (0, 1)");
  if (!grid.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "grid must be finite");
  const double z = normal_quantile(0.5 * (1.0 + level));
  PredictionBands out;
  out.grid = grid;
  out.level = level;
  const Eigen::Index m = grid.size();
  out.mean.resize(m);
  out.sd.resize(m);
  out.cred_lo.resize(m);
  out.cred_hi.resize(m);
  out.pred_lo.resize(m);
  out.pred_hi.resize(m);
  for (Eigen::Index g = 0; g < m; ++g) {
    const Eigen::VectorXd xb = polynomial_basis(grid[g], {fit.spec.mean_degree, true});
    const Eigen::VectorXd zb = polynomial_basis(grid[g], {fit.spec.var_degree, true});
    const double mu = xb.dot(fit.beta);
    const double sd = std::exp(0.5 * zb.dot(fit.gamma));
    const double se2 = fit.beta_cov.size() > 0 ? std::max(0.0, xb.dot(fit.beta_cov * xb)) : 0.0;
    out.mean[g] = mu;
    out.sd[g] = sd;
    out.cred_lo[g] = mu - z * std::sqrt(se2);
    out.cred_hi[g] = mu + z * std::sqrt(se2);
    out.pred_lo[g] = mu - z * std::sqrt(sd * sd + se2);
    out.pred_hi[g] = mu + z * std::sqrt(sd * sd + se2);
  }
  return out;
}

PredictionBands harvey_predict(const HarveyPosterior& posterior, const Eigen::VectorXd& grid, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kDomainError, "level must lie in (0, 1)");
  if (!grid.allFinite()) throw Error(ErrorCode::kNonFiniteValue, "grid must be finite");
  const Eigen::MatrixXd draws = posterior.pooled();
  if (draws.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "posterior has no draws");
  const Eigen::Index kb = posterior.n_beta();
  const Eigen::Index kg = posterior.n_gamma();
  const double lo_q = 0.5 * (1.0 - level);
  const double hi_q = 0.5 * (1.0 + level);

  PredictionBands out;
  out.grid = grid;
  out.level = level;
  const Eigen::Index m = grid.size();
  out.mean.resize(m);
  out.sd.resize(m);
  out.cred_lo.resize(m);
  out.cred_hi.resize(m);
  out.pred_lo.resize(m);
  out.pred_hi.resize(m);
  std::vector<double> mu(static_cast<std::size_t>(draws.rows()));
  std::vector<double> sd(mu.size());
  for (Eigen::Index g = 0; g < m; ++g) {
    const Eigen::VectorXd xb = polynomial_basis(grid[g], {posterior.spec.mean_degree, true});
    const Eigen::VectorXd zb = polynomial_basis(grid[g], {posterior.spec.var_degree, true});
    double mu_sum = 0.0;
    double sd_sum = 0.0;
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
      const auto k = static_cast<std::size_t>(s);
      mu[k] = draws.row(s).head(kb).dot(xb);
      sd[k] = std::exp(0.5 * draws.row(s).tail(kg).dot(zb));
      mu_sum += mu[k];
      sd_sum += sd[k];
    }
    out.mean[g] = mu_sum / static_cast<double>(mu.size());
    out.sd[g] = sd_sum / static_cast<double>(sd.size());
    const double p_lo = mixture_quantile(mu, sd, lo_q);
    const double p_hi = mixture_quantile(mu, sd, hi_q);
    std::vector<double> sorted = mu;
    out.cred_lo[g] = type7_quantile(sorted, lo_q);
    out.cred_hi[g] = type7_quantile(sorted, hi_q);
    out.pred_lo[g] = std::min(p_lo, out.cred_lo[g]);
    out.pred_hi[g] = std::max(p_hi, out.cred_hi[g]);
  }
  return out;
}

}  // namespace hetdemand
