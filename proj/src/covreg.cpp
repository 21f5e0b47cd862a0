#include "hetdemand/covreg.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <thread>

#include "hetdemand/error.hpp"
#include "hetdemand/rng.hpp"
#include "hetdemand/stochastics.hpp"
#include "linalg.hpp"

namespace hetdemand {
namespace {

constexpr double kPsiJitter = 1e-10;
constexpr double kLog2Pi = 1.83787706640934548356;

// Rows sharing one intensity value. Everything the EM needs is a function of
// (n, sum y, sum y y^T) per level; the Gibbs sampler also keeps the rows.
struct Level {
  double x = 0.0;
  Eigen::VectorXd basis;
  std::vector<Eigen::Index> rows;
  Eigen::MatrixXd y;  // p x n_l
  Eigen::VectorXd sum_y;
  Eigen::MatrixXd syy;
};

struct Grouped {
  std::vector<Level> levels;
  Eigen::MatrixXd syy_total;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index q = 0;
};

Grouped group_levels(const DemandDataset& data, int degree) {
  std::map<double, std::vector<Eigen::Index>> by_x;
  for (Eigen::Index i = 0; i < data.n(); ++i) by_x[data.x()[i]].push_back(i);
  Grouped g;
  g.n = data.n();
  g.p = data.p();
  g.q = degree + 1;
  g.syy_total = data.y().transpose() * data.y();
  for (auto& [x, rows] : by_x) {
    Level l;
    l.x = x;
    l.basis = polynomial_basis(x, {degree, true});
    l.y.resize(g.p, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) l.y.col(static_cast<Eigen::Index>(c)) = data.y().row(rows[c]).transpose();
    l.sum_y = l.y.rowwise().sum();
    l.syy = l.y * l.y.transpose();
    l.rows = std::move(rows);
    g.levels.push_back(std::move(l));
  }
  return g;
}

void validate(const DemandDataset& data, const CovRegSpec& spec) {
  if (spec.rank < 0) throw Error(ErrorCode::kInvalidArgument, "rank must be >= 0");
  validate_basis({spec.basis_degree, true});
  const Eigen::Index p = data.p();
  const Eigen::Index q = spec.basis_degree + 1;
  if (spec.rank > p * q) {
    throw Error(ErrorCode::kInvalidArgument, "rank " + std::to_string(spec.rank) + " exceeds p*q = " + std::to_string(p * q));
  }
  const Eigen::Index needed = p + q * (spec.rank + 1);
  if (data.n() < needed) {
    throw Error(ErrorCode::kInsufficientData, std::to_string(data.n()) + " rows; covariance regression needs at least " +
                                                  std::to_string(needed));
  }
}

Eigen::MatrixXd latent_loadings(const Eigen::MatrixXd& c, Eigen::Index q, int rank, const Eigen::VectorXd& basis) {
  Eigen::MatrixXd h(c.rows(), rank);
  for (int k = 0; k < rank; ++k) h.col(k) = c.middleCols((k + 1) * q, q) * basis;
  return h;
}

// Sum over levels of kron(G_l, x x^T) and the matching kron(Yg_l, x^T).
void add_level_moments(const Eigen::MatrixXd& g, const Eigen::MatrixXd& yg, const Eigen::VectorXd& basis,
                       Eigen::MatrixXd& sww, Eigen::MatrixXd& syw) {
  const Eigen::Index q = basis.size();
  const Eigen::MatrixXd xx = basis * basis.transpose();
  for (Eigen::Index a = 0; a < g.rows(); ++a) {
    syw.middleCols(a * q, q).noalias() += yg.col(a) * basis.transpose();
    for (Eigen::Index b = 0; b < g.cols(); ++b) sww.block(a * q, b * q, q, q) += g(a, b) * xx;
  }
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Accepts psi as-is, or with one jitter; otherwise PsiNotPD.
Eigen::MatrixXd checked_psi(Eigen::MatrixXd psi, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(psi);
  if (llt.info() == Eigen::Success && psi.allFinite()) return psi;
  const double jitter = kPsiJitter * psi.trace() / static_cast<double>(psi.rows());
  psi.diagonal().array() += jitter;
  llt.compute(psi);
  if (llt.info() != Eigen::Success || !psi.allFinite()) {
    throw Error(ErrorCode::kPsiNotPD, "Psi update is not positive definite after jitter");
  }
  return psi;
}

double observed_loglik(const Grouped& g, const Eigen::MatrixXd& c, const Eigen::MatrixXd& psi, int rank) {
  double ll = 0.0;
  for (const auto& l : g.levels) {
    const Eigen::VectorXd mu = c.leftCols(g.q) * l.basis;
    const Eigen::MatrixXd h = latent_loadings(c, g.q, rank, l.basis);
    const Eigen::MatrixXd sigma = psi + h * h.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const auto nl = static_cast<double>(l.rows.size());
    const Eigen::MatrixXd smu = l.sum_y * mu.transpose();
    const Eigen::MatrixXd resid = l.syy - smu - smu.transpose() + nl * mu * mu.transpose();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    ll -= 0.5 * (nl * (static_cast<double>(g.p) * kLog2Pi + logdet) + llt.solve(resid).trace());
  }
  return ll;
}

struct EmState {
  Eigen::MatrixXd c;
  Eigen::MatrixXd psi;
  CovRegFit fit;
};

// Runs EM without throwing on non-convergence; the caller decides.
EmState run_em(const Grouped& g, const CovRegSpec& spec, const EmOptions& options) {
  const int r = spec.rank;
  const Eigen::Index p = g.p;
  const Eigen::Index q = g.q;
  const Eigen::Index width = q * (r + 1);
  const auto n = static_cast<double>(g.n);

  // Rank-0 start: A by least squares, Psi as the MLE residual covariance.
  Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd syx = Eigen::MatrixXd::Zero(p, q);
  for (const auto& l : g.levels) {
    sxx += static_cast<double>(l.rows.size()) * l.basis * l.basis.transpose();
    syx += l.sum_y * l.basis.transpose();
  }
  const Eigen::LDLT<Eigen::MatrixXd> sxx_ldlt(sxx);
  EmState st;
  st.c = Eigen::MatrixXd::Zero(p, width);
  st.c.leftCols(q) = sxx_ldlt.solve(syx.transpose()).transpose();
  Eigen::LLT<Eigen::MatrixXd> psi_llt;
  st.psi = checked_psi(symmetrize((g.syy_total - st.c.leftCols(q) * syx.transpose()) / n), psi_llt);
  if (r > 0) {
    RngStream rng(options.seed, 0);
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = q; k < width; ++k) st.c(j, k) = options.init_sd * rng.normal();
    }
  }

  CovRegFit& fit = st.fit;
  fit.spec = spec;
  double ll = observed_loglik(g, st.c, st.psi, r);
  fit.loglik_trace.push_back(ll);

  const Eigen::MatrixXd eye_r = Eigen::MatrixXd::Identity(r, r);
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::MatrixXd sww = Eigen::MatrixXd::Zero(width, width);
    Eigen::MatrixXd syw = Eigen::MatrixXd::Zero(p, width);
    for (const auto& l : g.levels) {
      const auto nl = static_cast<double>(l.rows.size());
      const Eigen::VectorXd mu = st.c.leftCols(q) * l.basis;
      Eigen::MatrixXd gl(r + 1, r + 1);
      Eigen::MatrixXd ygl(p, r + 1);
      gl(0, 0) = nl;
      ygl.col(0) = l.sum_y;
      if (r > 0) {
        const Eigen::MatrixXd h = latent_loadings(st.c, q, r, l.basis);
        const Eigen::MatrixXd psi_inv_h = psi_llt.solve(h);
        const Eigen::MatrixXd v = (eye_r + h.transpose() * psi_inv_h).inverse();
        const Eigen::MatrixXd k = v * psi_inv_h.transpose();  // m_i = k (y_i - mu)
        const Eigen::MatrixXd smu = l.sum_y * mu.transpose();
        const Eigen::MatrixXd resid = l.syy - smu - smu.transpose() + nl * mu * mu.transpose();
        const Eigen::VectorXd sum_m = k * (l.sum_y - nl * mu);
        gl.block(1, 0, r, 1) = sum_m;
        gl.block(0, 1, 1, r) = sum_m.transpose();
        gl.bottomRightCorner(r, r) = nl * v + k * resid * k.transpose();
        ygl.rightCols(r) = (l.syy - smu) * k.transpose();
      }
      add_level_moments(gl, ygl, l.basis, sww, syw);
    }
    const Eigen::LDLT<Eigen::MatrixXd> sww_ldlt(symmetrize(sww));
    st.c = sww_ldlt.solve(syw.transpose()).transpose();
    st.psi = checked_psi(symmetrize((g.syy_total - st.c * syw.transpose()) / n), psi_llt);
    const double previous = ll;
    ll = observed_loglik(g, st.c, st.psi, r);
    fit.loglik_trace.push_back(ll);
    fit.iterations = it;
    if (std::abs(ll - previous) <= options.tolerance * std::max(1.0, std::abs(ll))) {
      fit.converged = true;
      break;
    }
  }
  fit.loglik = ll;
  fit.A = st.c.leftCols(q);
  for (int k = 0; k < r; ++k) fit.B.push_back(st.c.middleCols((k + 1) * q, q));
  fit.Psi = st.psi;
  if (r > 0) fit.warnings.push_back("B matrices are identified only up to sign and rotation; compare Sigma_x");
  return st;
}

Eigen::MatrixXd latent_means(const Grouped& g, const EmState& st, int r) {
  Eigen::MatrixXd scores(g.n, r);
  if (r == 0) return scores;
  const Eigen::LLT<Eigen::MatrixXd> psi_llt(st.psi);
  for (const auto& l : g.levels) {
    const Eigen::MatrixXd h = latent_loadings(st.c, g.q, r, l.basis);
    const Eigen::MatrixXd psi_inv_h = psi_llt.solve(h);
    const Eigen::MatrixXd v = (Eigen::MatrixXd::Identity(r, r) + h.transpose() * psi_inv_h).inverse();
    const Eigen::MatrixXd m = v * psi_inv_h.transpose() * (l.y.colwise() - st.c.leftCols(g.q) * l.basis);
    for (std::size_t c = 0; c < l.rows.size(); ++c) scores.row(l.rows[c]) = m.col(static_cast<Eigen::Index>(c)).transpose();
  }
  return scores;
}

void validate_priors(const CovRegPriors& pr, Eigen::Index p, Eigen::Index width) {
  if (pr.Psi0.rows() != p || pr.Psi0.cols() != p) throw Error(ErrorCode::kInvalidArgument, "Psi0 must be p x p");
  if (pr.C0.rows() != p || pr.C0.cols() != width) throw Error(ErrorCode::kInvalidArgument, "C0 must be p x q(r+1)");
  if (pr.V0.rows() != width || pr.V0.cols() != width) throw Error(ErrorCode::kInvalidArgument, "V0 must be q(r+1) square");
  if (!(pr.nu0 > static_cast<double>(p) + 1.0)) throw Error(ErrorCode::kInvalidDof, "nu0 must exceed p + 1");
  if (Eigen::LLT<Eigen::MatrixXd>(pr.Psi0).info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "Psi0 is not positive definite");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(pr.V0).info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "V0 is not positive definite");
  }
}

struct ChainOutput {
  std::vector<CovRegDraw> draws;
  std::vector<int> iterations;
};

ChainOutput run_gibbs_chain(const Grouped& g, const CovRegSpec& spec, const CovRegPriors& pr,
                            const GibbsProtocol& protocol, const EmState& start, RngStream& rng) {
  const int r = spec.rank;
  const Eigen::Index p = g.p;
  const Eigen::Index q = g.q;
  const Eigen::Index width = q * (r + 1);
  const double nu_post = pr.nu0 + static_cast<double>(g.n);

  const Eigen::MatrixXd v0_inv = pr.V0.llt().solve(Eigen::MatrixXd::Identity(width, width));
  const Eigen::MatrixXd c0_v0inv = pr.C0 * v0_inv;
  const Eigen::MatrixXd prior_scatter = pr.Psi0 + c0_v0inv * pr.C0.transpose();
  const Eigen::MatrixXd eye_r = Eigen::MatrixXd::Identity(r, r);

  Eigen::MatrixXd c = start.c;
  Eigen::MatrixXd psi = start.psi;
  Eigen::LLT<Eigen::MatrixXd> psi_llt(psi);

  ChainOutput out;
  for (int t = 1; t <= protocol.iterations; ++t) {
    // (1) gamma_i | C, Psi, drawn level by level.
    Eigen::MatrixXd sww = Eigen::MatrixXd::Zero(width, width);
    Eigen::MatrixXd syw = Eigen::MatrixXd::Zero(p, width);
    for (const auto& l : g.levels) {
      const auto nl = static_cast<Eigen::Index>(l.rows.size());
      Eigen::MatrixXd gl(r + 1, r + 1);
      Eigen::MatrixXd ygl(p, r + 1);
      gl(0, 0) = static_cast<double>(nl);
      ygl.col(0) = l.sum_y;
      if (r > 0) {
        const Eigen::VectorXd mu = c.leftCols(q) * l.basis;
        const Eigen::MatrixXd h = latent_loadings(c, q, r, l.basis);
        const Eigen::MatrixXd psi_inv_h = psi_llt.solve(h);
        const Eigen::LLT<Eigen::MatrixXd> prec_llt(eye_r + h.transpose() * psi_inv_h);
        Eigen::MatrixXd z(r, nl);
        for (Eigen::Index col = 0; col < nl; ++col) {
          for (Eigen::Index a = 0; a < r; ++a) z(a, col) = rng.normal();
        }
        // mean V H^T Psi^-1 (y - mu); U^-1 z has covariance V.
        const Eigen::MatrixXd gam = prec_llt.solve(psi_inv_h.transpose() * (l.y.colwise() - mu)) +
                                    prec_llt.matrixU().solve(z);
        const Eigen::VectorXd sum_g = gam.rowwise().sum();
        gl.block(1, 0, r, 1) = sum_g;
        gl.block(0, 1, 1, r) = sum_g.transpose();
        gl.bottomRightCorner(r, r).noalias() = gam * gam.transpose();
        ygl.rightCols(r).noalias() = l.y * gam.transpose();
      }
      add_level_moments(gl, ygl, l.basis, sww, syw);
    }

    // (2) Psi | gamma with C integrated out, then (3) C | Psi, gamma.
    const Eigen::MatrixXd post_prec = symmetrize(sww + v0_inv);
    const Eigen::LLT<Eigen::MatrixXd> post_llt(post_prec);
    if (post_llt.info() != Eigen::Success) throw Error(ErrorCode::kNotPositiveDefinite, "C posterior precision is not PD");
    const Eigen::MatrixXd rhs = syw + c0_v0inv;
    const Eigen::MatrixXd m = post_llt.solve(rhs.transpose()).transpose();
    const Eigen::MatrixXd scatter = symmetrize(prior_scatter + g.syy_total - m * rhs.transpose());
    psi = checked_psi(symmetrize(sample_inverse_wishart(scatter, nu_post, rng)), psi_llt);
    const Eigen::MatrixXd col_cov = post_llt.solve(Eigen::MatrixXd::Identity(width, width));
    c = sample_matrix_normal(m, psi, symmetrize(col_cov), rng);

    if (t % protocol.thin == 0 && t / protocol.thin > protocol.burn_in_draws) {
      out.draws.push_back({c, psi});
      out.iterations.push_back(t);
    }
  }
  return out;
}

double type7(std::vector<double>& v, double prob) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void check_pair(std::pair<int, int> pair, Eigen::Index p) {
  if (pair.first < 0 || pair.second < 0 || pair.first >= p || pair.second >= p || pair.first == pair.second) {
    throw Error(ErrorCode::kInvalidArgument, "invalid component pair");
  }
}

std::vector<std::pair<int, int>> all_pairs(Eigen::Index p) {
  if (p < 2) throw Error(ErrorCode::kInvalidArgument, "correlation curves need p >= 2");
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < p; ++j) {
    for (int k = j + 1; k < p; ++k) pairs.emplace_back(j, k);
  }
  return pairs;
}

}  // namespace

CovRegFit fit_covreg_em(const DemandDataset& data, const CovRegSpec& spec, const EmOptions& options) {
  validate(data, spec);
  if (!(options.tolerance > 0.0) || options.max_iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid EM options");
  }
  const Grouped g = group_levels(data, spec.basis_degree);
  EmState st = run_em(g, spec, options);
  if (!st.fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "EM did not converge in " + std::to_string(options.max_iterations) + " iterations");
  }
  if (options.latent_scores) st.fit.latent_scores = latent_means(g, st, spec.rank);
  return st.fit;
}

CovRegPriors default_covreg_priors(const DemandDataset& data, const CovRegSpec& spec) {
  validate(data, spec);
  const Eigen::Index p = data.p();
  const Eigen::Index width = (spec.basis_degree + 1) * (spec.rank + 1);
  const auto mlr = detail::least_squares_multi(design_matrix(data.x(), {spec.basis_degree, true}), data.y());
  CovRegPriors pr;
  pr.Psi0 = symmetrize(mlr.residuals.transpose() * mlr.residuals / static_cast<double>(data.n()));
  pr.nu0 = static_cast<double>(p) + 2.0;
  pr.C0 = Eigen::MatrixXd::Zero(p, width);
  pr.V0 = kDefaultV0Scale * Eigen::MatrixXd::Identity(width, width);
  return pr;
}

Eigen::MatrixXd CovRegPosterior::A(std::size_t draw) const { return draws.at(draw).C.leftCols(q); }

Eigen::MatrixXd CovRegPosterior::B(std::size_t draw, int k) const {
  if (k < 0 || k >= spec.rank) throw Error(ErrorCode::kInvalidArgument, "rank index out of range");
  return draws.at(draw).C.middleCols((k + 1) * q, q);
}

CovRegPosterior fit_covreg_gibbs(const DemandDataset& data, const CovRegSpec& spec, const CovRegPriors& priors,
                                 const GibbsProtocol& protocol, std::uint64_t seed) {
  validate(data, spec);
  if (protocol.iterations < 1 || protocol.thin < 1 || protocol.burn_in_draws < 0 || protocol.chains < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid Gibbs protocol");
  }
  if (protocol.iterations / protocol.thin <= protocol.burn_in_draws) {
    throw Error(ErrorCode::kInvalidArgument, "burn-in leaves no retained draws");
  }
  const Grouped g = group_levels(data, spec.basis_degree);
  validate_priors(priors, g.p, g.q * (spec.rank + 1));

  EmOptions em_options;
  em_options.seed = seed;
  const EmState start = run_em(g, spec, em_options);

  const auto n_chains = static_cast<std::size_t>(protocol.chains);
  std::vector<ChainOutput> outputs(n_chains);
  std::vector<std::exception_ptr> failures(n_chains);
  auto run = [&](std::size_t c) {
    try {
      RngStream rng(seed, c + 1);
      outputs[c] = run_gibbs_chain(g, spec, priors, protocol, start, rng);
    } catch (...) {
      failures[c] = std::current_exception();
    }
  };
  if (protocol.parallel && n_chains > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < n_chains; ++c) workers.emplace_back(run, c);
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) run(c);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  CovRegPosterior post;
  post.spec = spec;
  post.priors = priors;
  post.protocol = protocol;
  post.seed = seed;
  post.p = g.p;
  post.q = g.q;
  for (std::size_t c = 0; c < n_chains; ++c) {
    for (std::size_t d = 0; d < outputs[c].draws.size(); ++d) {
      post.draws.push_back(std::move(outputs[c].draws[d]));
      post.draw_chain.push_back(static_cast<int>(c));
      post.draw_iterations.push_back(outputs[c].iterations[d]);
    }
  }
  if (spec.rank > 0) post.warnings.push_back("B draws are identified only up to sign and rotation; compare Sigma_x");

  // Scalar summaries: Psi entries and log det Sigma_x at the extreme and middle levels.
  const std::size_t len = post.draws.size() / n_chains;
  std::vector<std::pair<std::string, std::function<double(const CovRegDraw&)>>> scalars;
  for (Eigen::Index j = 0; j < g.p; ++j) {
    for (Eigen::Index k = j; k < g.p; ++k) {
      scalars.emplace_back("Psi_" + std::to_string(j + 1) + "_" + std::to_string(k + 1),
                           [j, k](const CovRegDraw& d) { return d.Psi(j, k); });
    }
  }
  const std::size_t nl = g.levels.size();
  for (std::size_t idx : {std::size_t{0}, nl / 2, nl - 1}) {
    const double x = g.levels[idx].x;
    scalars.emplace_back("logdet_Sigma@" + std::to_string(x), [&g, &spec, x](const CovRegDraw& d) {
      std::vector<Eigen::MatrixXd> b;
      for (int k = 0; k < spec.rank; ++k) b.push_back(d.C.middleCols((k + 1) * g.q, g.q));
      return std::log(covariance_at(d.Psi, b, x, spec.basis_degree).determinant());
    });
  }
  for (const auto& [name, fn] : scalars) {
    ScalarSummary s;
    s.name = name;
    std::vector<std::vector<double>> chains(n_chains);
    double sum = 0.0;
    for (std::size_t d = 0; d < post.draws.size(); ++d) {
      const double v = fn(post.draws[d]);
      chains[static_cast<std::size_t>(post.draw_chain[d])].push_back(v);
      sum += v;
    }
    s.mean = sum / static_cast<double>(post.draws.size());
    double ss = 0.0;
    for (const auto& ch : chains) {
      for (double v : ch) ss += (v - s.mean) * (v - s.mean);
    }
    s.sd = std::sqrt(ss / std::max(1.0, static_cast<double>(post.draws.size()) - 1.0));
    if (len >= 8) {
      s.diagnostics = diagnose(chains);
      if (!(s.diagnostics.r_hat < 1.05) || !(s.diagnostics.mcse < 0.05)) {
        post.not_converged = true;
        post.warnings.push_back("NotConverged: " + s.name + " r_hat=" + std::to_string(s.diagnostics.r_hat) +
                                " mcse=" + std::to_string(s.diagnostics.mcse));
      }
    }
    post.summaries.push_back(std::move(s));
  }
  return post;
}

Eigen::MatrixXd covariance_at(const Eigen::MatrixXd& psi, const std::vector<Eigen::MatrixXd>& b, double x,
                              int basis_degree) {
  if (!std::isfinite(x)) throw Error(ErrorCode::kNonFiniteValue, "intensity must be finite");
  const Eigen::VectorXd basis = polynomial_basis(x, {basis_degree, true});
  Eigen::MatrixXd sigma = psi;
  for (const auto& bk : b) {
    const Eigen::VectorXd h = bk * basis;
    sigma.noalias() += h * h.transpose();
  }
  return symmetrize(sigma);
}

Eigen::MatrixXd covariance_at(const CovRegFit& fit, double x) {
  return covariance_at(fit.Psi, fit.B, x, fit.spec.basis_degree);
}

Eigen::VectorXd mean_at(const CovRegFit& fit, double x) {
  return fit.A * polynomial_basis(x, {fit.spec.basis_degree, true});
}

Eigen::MatrixXd covariance_at(const CovRegPosterior& posterior, std::size_t draw, double x) {
  std::vector<Eigen::MatrixXd> b;
  for (int k = 0; k < posterior.spec.rank; ++k) b.push_back(posterior.B(draw, k));
  return covariance_at(posterior.draws.at(draw).Psi, b, x, posterior.spec.basis_degree);
}

Eigen::VectorXd predictive_mean(const CovRegPosterior& posterior, double x) {
  if (posterior.draws.empty()) throw Error(ErrorCode::kInvalidArgument, "posterior has no draws");
  const Eigen::VectorXd basis = polynomial_basis(x, {posterior.spec.basis_degree, true});
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(posterior.p);
  for (std::size_t d = 0; d < posterior.draws.size(); ++d) mean += posterior.A(d) * basis;
  return mean / static_cast<double>(posterior.draws.size());
}

Eigen::MatrixXd predictive_covariance(const CovRegPosterior& posterior, double x) {
  const Eigen::VectorXd mean = predictive_mean(posterior, x);
  const Eigen::VectorXd basis = polynomial_basis(x, {posterior.spec.basis_degree, true});
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(posterior.p, posterior.p);
  for (std::size_t d = 0; d < posterior.draws.size(); ++d) {
    const Eigen::VectorXd dev = posterior.A(d) * basis - mean;
    cov += covariance_at(posterior, d, x) + dev * dev.transpose();
  }
  return symmetrize(cov / static_cast<double>(posterior.draws.size()));
}

Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  corr = corr.cwiseMax(-1.0).cwiseMin(1.0);
  corr.diagonal().setOnes();
  return corr;
}

CorrelationCurves correlation_curves(const CovRegPosterior& posterior, const Eigen::VectorXd& grid, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kDomainError, "level must lie in (0, 1)");
  if (posterior.draws.empty()) throw Error(ErrorCode::kInvalidArgument, "posterior has no draws");
  CorrelationCurves out;
  out.grid = grid;
  out.level = level;
  out.pairs = all_pairs(posterior.p);
  const auto np = static_cast<Eigen::Index>(out.pairs.size());
  out.median.resize(grid.size(), np);
  out.lower.resize(grid.size(), np);
  out.upper.resize(grid.size(), np);
  std::vector<std::vector<double>> values(out.pairs.size(), std::vector<double>(posterior.draws.size()));
  for (Eigen::Index gi = 0; gi < grid.size(); ++gi) {
    for (std::size_t d = 0; d < posterior.draws.size(); ++d) {
      const Eigen::MatrixXd corr = covariance_to_correlation(covariance_at(posterior, d, grid[gi]));
      for (std::size_t pi = 0; pi < out.pairs.size(); ++pi) values[pi][d] = corr(out.pairs[pi].first, out.pairs[pi].second);
    }
    for (std::size_t pi = 0; pi < out.pairs.size(); ++pi) {
      const auto col = static_cast<Eigen::Index>(pi);
      out.median(gi, col) = type7(values[pi], 0.5);
      out.lower(gi, col) = type7(values[pi], 0.5 * (1.0 - level));
      out.upper(gi, col) = type7(values[pi], 0.5 * (1.0 + level));
    }
  }
  return out;
}

CorrelationCurves correlation_curves(const CovRegFit& fit, const Eigen::VectorXd& grid) {
  CorrelationCurves out;
  out.grid = grid;
  out.pairs = all_pairs(fit.p());
  const auto np = static_cast<Eigen::Index>(out.pairs.size());
  out.median.resize(grid.size(), np);
  for (Eigen::Index gi = 0; gi < grid.size(); ++gi) {
    const Eigen::MatrixXd corr = covariance_to_correlation(covariance_at(fit, grid[gi]));
    for (Eigen::Index pi = 0; pi < np; ++pi) {
      const auto& pr = out.pairs[static_cast<std::size_t>(pi)];
      out.median(gi, pi) = corr(pr.first, pr.second);
    }
  }
  out.lower = out.median;
  out.upper = out.median;
  return out;
}

double chi2_2_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kDomainError, "level must lie in (0, 1)");
  return -2.0 * std::log1p(-level);
}

Ellipse ellipse_from_covariance(const Eigen::Matrix2d& s, const Eigen::Vector2d& center, double level) {
  const double chi2 = chi2_2_quantile(level);
  if (!s.allFinite()) throw Error(ErrorCode::kDegenerateSubmatrix, "submatrix is not finite");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(0.5 * (s + s.transpose()));
  const Eigen::Vector2d lambda = eig.eigenvalues();  // ascending
  if (!(lambda[0] > 1e-12 * std::max(1.0, std::abs(lambda[1])))) {
    throw Error(ErrorCode::kDegenerateSubmatrix, "2x2 covariance submatrix is singular");
  }
  Ellipse e;
  e.center = center;
  e.level = level;
  e.chi2 = chi2;
  e.shape = s;
  e.semi_axes = Eigen::Vector2d(std::sqrt(chi2 * lambda[1]), std::sqrt(chi2 * lambda[0]));
  const Eigen::Vector2d major = eig.eigenvectors().col(1);
  double angle = std::atan2(major[1], major[0]);
  if (angle <= -std::numbers::pi / 2) angle += std::numbers::pi;
  if (angle > std::numbers::pi / 2) angle -= std::numbers::pi;
  e.angle = angle;
  return e;
}

bool Ellipse::contains(const Eigen::Vector2d& v) const {
  const Eigen::Vector2d d = v - center;
  return d.dot(shape.ldlt().solve(d)) <= chi2;
}

double Ellipse::area() const { return std::numbers::pi * semi_axes[0] * semi_axes[1]; }

Ellipse prediction_ellipse(const CovRegFit& fit, double x, std::pair<int, int> pair, double level,
                           EllipseSpace space) {
  check_pair(pair, fit.p());
  const Eigen::MatrixXd sigma = covariance_at(fit, x);
  const Eigen::VectorXd mu = mean_at(fit, x);
  Eigen::Matrix2d s;
  s << sigma(pair.first, pair.first), sigma(pair.first, pair.second), sigma(pair.second, pair.first),
      sigma(pair.second, pair.second);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  if (space == EllipseSpace::kDemand) c = Eigen::Vector2d(mu[pair.first], mu[pair.second]);
  return ellipse_from_covariance(s, c, level);
}

Ellipse prediction_ellipse(const CovRegPosterior& posterior, double x, std::pair<int, int> pair, double level,
                           EllipseSpace space) {
  check_pair(pair, posterior.p);
  const Eigen::MatrixXd sigma = predictive_covariance(posterior, x);
  const Eigen::VectorXd mu = predictive_mean(posterior, x);
  Eigen::Matrix2d s;
  s << sigma(pair.first, pair.first), sigma(pair.first, pair.second), sigma(pair.second, pair.first),
      sigma(pair.second, pair.second);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  if (space == EllipseSpace::kDemand) c = Eigen::Vector2d(mu[pair.first], mu[pair.second]);
  return ellipse_from_covariance(s, c, level);
}

}  // namespace hetdemand
