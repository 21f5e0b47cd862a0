#include <doctest.h>

#include <cmath>

#include "hetdemand/baseline.hpp"
#include "hetdemand/dataset.hpp"
#include "hetdemand/harvey.hpp"
#include "hetdemand/rng.hpp"
#include "hetdemand/synth.hpp"
#include "test_support.hpp"

using namespace hetdemand;
using testing::throws_code;

namespace {

DemandDataset trumpet(std::uint64_t seed, int records = 80) {
  return generate(truth_preset("harvey-trumpet"), table1_grid(records), seed);
}

}  // namespace

TEST_CASE("constant-variance MLE reduces to OLS") {
  const auto d = trumpet(1);
  const auto fit = fit_harvey_mle(d.demand(0), d.x(), {3, 0});
  const auto ols = fit_ols(d.demand(0), design_matrix(d.x(), {3}));
  CHECK((fit.beta - ols.coeffs).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(fit.gamma[0] == doctest::Approx(std::log(ols.sse / static_cast<double>(d.n()))).epsilon(1e-10));
  CHECK(fit.converged);
}

TEST_CASE("MLE rejects too little data") {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1, 1);
  CHECK(throws_code([&] { fit_harvey_mle(x, x, {3, 3}); }, ErrorCode::kInsufficientData));
}

TEST_CASE("MLE likelihood is monotone, beats the truth and zeroes the score") {
  const UnivariateTruth truth = *truth_preset("harvey-trumpet").univariate;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = trumpet(seed);
    const auto fit = fit_harvey_mle(d.demand(0), d.x());
    REQUIRE(fit.converged);
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-10 * std::abs(fit.loglik_trace[i - 1]));
    }
    const HarveyModel model(d.demand(0), d.x(), {});
    CHECK(fit.loglik >= model.loglik(truth.beta, truth.gamma));
    CHECK(fit.loglik == doctest::Approx(model.loglik(fit.beta, fit.gamma)).epsilon(1e-12));
    CHECK(model.score(fit.beta, fit.gamma).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("analytic score matches central differences") {
  const auto d = trumpet(4, 20);
  const HarveyModel model(d.demand(0), d.x(), {});
  RngStream rng(17, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd beta(4), gamma(4);
    for (int j = 0; j < 4; ++j) {
      beta[j] = 0.5 * rng.normal();
      gamma[j] = 0.3 * rng.normal();
    }
    const Eigen::VectorXd g = model.score(beta, gamma);
    for (int j = 0; j < 8; ++j) {
      Eigen::VectorXd bp = beta, bm = beta, gp = gamma, gm = gamma;
      const double h = 1e-5;
      if (j < 4) {
        bp[j] += h;
        bm[j] -= h;
      } else {
        gp[j - 4] += h;
        gm[j - 4] -= h;
      }
      const double fd = (model.loglik(bp, gp) - model.loglik(bm, gm)) / (2 * h);
      CHECK(std::abs(fd - g[j]) <= 1e-4 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST_CASE("point predictions: straight and trumpet bands") {
  const auto d = trumpet(2);
  const Eigen::VectorXd grid = make_grid(-2.3, 0.1, 0.1);
  const auto flat = harvey_predict(fit_harvey_mle(d.demand(0), d.x(), {3, 0}), grid, 0.9);
  const Eigen::VectorXd half = flat.pred_hi - flat.pred_lo;
  CHECK((flat.sd.array() - flat.sd[0]).abs().maxCoeff() < 1e-12);
  const auto slope = harvey_predict(fit_harvey_mle(d.demand(0), d.x(), {3, 1}), grid, 0.9);
  REQUIRE(slope.sd.size() == 25);
  for (Eigen::Index i = 1; i < grid.size(); ++i) CHECK(slope.sd[i] > slope.sd[i - 1]);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    CHECK(slope.pred_lo[i] <= slope.cred_lo[i]);
    CHECK(slope.cred_lo[i] <= slope.mean[i]);
    CHECK(slope.mean[i] <= slope.cred_hi[i]);
    CHECK(slope.cred_hi[i] <= slope.pred_hi[i]);
    CHECK(slope.sd[i] > 0.0);
  }
  CHECK(half.size() == 25);
}

TEST_CASE("posterior is reproducible and serial equals parallel") {
  const auto d = trumpet(3, 20);
  McmcProtocol protocol;
  protocol.iterations = 1000;
  const auto a = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 7);
  const auto b = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 7);
  protocol.parallel = false;
  const auto c = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 7);
  REQUIRE(a.chains.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a.chains[k] == b.chains[k]);
    CHECK(a.chains[k] == c.chains[k]);
    CHECK(a.chains[k].rows() == 50);
    CHECK(a.chains[k].allFinite());
  }
  const auto other = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 8);
  CHECK(other.chains[0] != a.chains[0]);
}

TEST_CASE("paper protocol converges and adapts the proposal") {
  const auto d = trumpet(5);
  const auto post = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, {}, 11);
  CHECK_FALSE(post.not_converged);
  for (const auto& s : post.summaries) {
    CHECK(s.diagnostics.r_hat < kRhatThreshold);
    CHECK(s.diagnostics.mcse < kMcseThreshold);
  }
  for (double rate : post.acceptance_rate) {
    CHECK(rate >= 0.15);
    CHECK(rate <= 0.45);
  }
  CHECK(post.parameter_names.front() == "beta0");
  CHECK(post.parameter_names.back() == "gamma3");
}

TEST_CASE("constant-variance posterior concentrates near OLS") {
  double diff_small = 0.0, diff_large = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (int records : {8, 80}) {
      const auto d = generate(truth_preset("homoscedastic"), table1_grid(records), seed);
      const auto post = fit_harvey_bayes(d.demand(0), d.x(), {3, 0}, {}, {}, seed);
      const auto ols = fit_ols(d.demand(0), design_matrix(d.x(), {3}));
      const Eigen::VectorXd mean = post.posterior_mean().head(4);
      for (int j = 0; j < 4; ++j) {
        if (records == 80) CHECK(std::abs(mean[j] - ols.coeffs[j]) <= 3.0 * post.summaries[static_cast<std::size_t>(j)].diagnostics.mcse + 1e-3);
      }
      (records == 8 ? diff_small : diff_large) += (mean - ols.coeffs).cwiseAbs().maxCoeff();
    }
  }
  CHECK(diff_large < diff_small);
}

TEST_CASE("posterior prediction bands are nested") {
  const auto d = trumpet(6);
  McmcProtocol protocol;
  protocol.iterations = 2000;
  const auto post = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 2);
  const auto bands = harvey_predict(post, make_grid(-2.3, 0.1, 0.1), 0.9);
  for (Eigen::Index i = 0; i < bands.grid.size(); ++i) {
    CHECK(bands.pred_lo[i] <= bands.cred_lo[i]);
    CHECK(bands.cred_lo[i] <= bands.mean[i]);
    CHECK(bands.mean[i] <= bands.cred_hi[i]);
    CHECK(bands.cred_hi[i] <= bands.pred_hi[i]);
  }
  CHECK(throws_code([&] { harvey_predict(post, bands.grid, 1.0); }, ErrorCode::kDomainError));
}
