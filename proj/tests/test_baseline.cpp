#include <doctest.h>

#include <cmath>

#include "hetdemand/baseline.hpp"
#include "hetdemand/dataset.hpp"
#include "hetdemand/rng.hpp"
#include "hetdemand/synth.hpp"
#include "test_support.hpp"

using namespace hetdemand;
using testing::throws_code;

namespace {

Eigen::MatrixXd line_design(const Eigen::VectorXd& x) { return design_matrix(x, {1}); }

}  // namespace

TEST_CASE("ols hand cases") {
  const Eigen::Vector3d x(0, 1, 2);
  auto f = fit_ols(Eigen::Vector3d(2, 5, 8), line_design(x));
  CHECK(f.coeffs[0] == doctest::Approx(2.0));
  CHECK(f.coeffs[1] == doctest::Approx(3.0));
  CHECK(f.sigma == doctest::Approx(0.0).epsilon(1e-12));

  f = fit_ols(Eigen::Vector3d(0, 1, 4), line_design(x));
  CHECK(f.coeffs[0] == doctest::Approx(-1.0 / 3.0));
  CHECK(f.coeffs[1] == doctest::Approx(2.0));
  CHECK(f.sigma == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(f.dof == 1);

  f = fit_ols(Eigen::Vector3d(1, 0, 1), line_design(Eigen::Vector3d(-1, 0, 1)));
  CHECK(f.coeffs[1] == doctest::Approx(0.0));
  CHECK(f.coeffs[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("ols errors") {
  const Eigen::Vector3d x(1, 1, 1);
  CHECK(throws_code([&] { fit_ols(Eigen::Vector3d(1, 2, 3), line_design(x)); }, ErrorCode::kRankDeficient));
  CHECK(throws_code([] { fit_ols(Eigen::Vector2d(1, 2), design_matrix(Eigen::Vector2d(0, 1), {1})); },
                    ErrorCode::kInsufficientData));
}

TEST_CASE("ols residuals are orthogonal to the design and shifts move only the intercept") {
  RngStream rng(1, 0);
  const int n = 60;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 3.0 * rng.uniform() - 2.0;
    y[i] = 0.4 + 1.1 * x[i] + 0.3 * rng.normal();
  }
  const auto X = design_matrix(x, {3});
  const auto f = fit_ols(y, X);
  const Eigen::VectorXd e = y - X * f.coeffs;
  CHECK((X.transpose() * e).cwiseAbs().maxCoeff() < 1e-8 * n * X.cwiseAbs().maxCoeff());
  const auto g = fit_ols((y.array() + 2.5).matrix(), X);
  CHECK(g.coeffs[0] - f.coeffs[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK((g.coeffs.tail(3) - f.coeffs.tail(3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("wls reductions") {
  RngStream rng(2, 0);
  const int n = 30;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform();
    y[i] = 1.0 + 2.0 * x[i] + rng.normal();
  }
  const auto X = line_design(x);
  const auto ols = fit_ols(y, X);
  for (double k : {1.0, 0.25, 7.0}) {
    const auto w = fit_wls(y, X, Eigen::VectorXd::Constant(n, k));
    CHECK((w.coeffs - ols.coeffs).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Weight 2 on one row equals duplicating that row.
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(n);
  weights[4] = 2.0;
  const auto w = fit_wls(y, X, weights);
  Eigen::VectorXd y2(n + 1);
  Eigen::VectorXd x2(n + 1);
  y2 << y, y[4];
  x2 << x, x[4];
  const auto dup = fit_ols(y2, line_design(x2));
  CHECK((w.coeffs - dup.coeffs).cwiseAbs().maxCoeff() < 1e-12);
  weights[0] = 0.0;
  CHECK(throws_code([&] { fit_wls(y, X, weights); }, ErrorCode::kNonPositiveWeight));
}

TEST_CASE("wls with true inverse-variance weights beats ols on average") {
  double mse_ols = 0.0, mse_wls = 0.0;
  const int n = 100;
  for (int seed = 0; seed < 500; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed), 0);
    Eigen::VectorXd x(n), y(n), w(n);
    for (int i = 0; i < n; ++i) {
      x[i] = -2.3 + 2.4 * i / (n - 1.0);
      const double sd = std::exp(0.5 * (-2.0 + 1.6 * x[i]));
      y[i] = 0.5 + 1.2 * x[i] + sd * rng.normal();
      w[i] = 1.0 / (sd * sd);
    }
    const auto X = line_design(x);
    const Eigen::Vector2d truth(0.5, 1.2);
    mse_ols += (fit_ols(y, X).coeffs - truth).squaredNorm();
    mse_wls += (fit_wls(y, X, w).coeffs - truth).squaredNorm();
  }
  CHECK(mse_wls <= mse_ols);
}

TEST_CASE("bilinear exact piecewise data") {
  const Eigen::VectorXd x = (Eigen::VectorXd(5) << -2, -1, 0, 1, 2).finished();
  const Eigen::VectorXd y = (Eigen::VectorXd(5) << -2, -1, 0, 2, 4).finished();
  const auto f = fit_bilinear(y, x, std::vector<double>{-0.5, 0.0, 0.5});
  CHECK(f.theta_sa == doctest::Approx(0.0));
  CHECK(f.theta01 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.theta11 == doctest::Approx(1.0));
  CHECK(f.theta21 == doctest::Approx(2.0));
  CHECK(f.sigma1 == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(f.sigma2 == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(f.predict(1.5) == doctest::Approx(3.0));
}

TEST_CASE("bilinear collinear data ties to the middle candidate") {
  Eigen::VectorXd x(9), y(9);
  for (int i = 0; i < 9; ++i) {
    x[i] = i;
    y[i] = 1.0 + 0.5 * i;
  }
  const std::vector<double> cands{2.0, 3.0, 4.0, 5.0, 6.0};
  const auto f = fit_bilinear(y, x, cands);
  CHECK(f.theta11 == doctest::Approx(f.theta21));
  CHECK(f.sse < 1e-20);
  CHECK(f.candidate_index == 2);
}

TEST_CASE("bilinear errors and default grid") {
  const Eigen::VectorXd x = (Eigen::VectorXd(4) << 0, 1, 2, 3).finished();
  CHECK(throws_code([&] { fit_bilinear(x, x); }, ErrorCode::kInsufficientData));
  const Eigen::VectorXd x5 = (Eigen::VectorXd(6) << 0, 1, 2, 3, 4, 5).finished();
  CHECK(throws_code([&] { fit_bilinear(x5, x5, std::vector<double>{0.5}); }, ErrorCode::kDegenerateBranch));
  CHECK(default_break_candidates(x5).size() == 81);
}

TEST_CASE("bilinear sse never exceeds ols sse") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = generate(truth_preset("harvey-trumpet"), table1_grid(8), seed);
    const auto b = fit_bilinear(d.demand(0), d.x());
    const auto o = fit_ols(d.demand(0), line_design(d.x()));
    CHECK(b.sse <= o.sse * (1.0 + 1e-12));
  }
}

TEST_CASE("bilinear recovers the break") {
  int hits = 0;
  const int n = 500;
  const double theta = -1.0;
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed), 0);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = -2.3 + 2.4 * rng.uniform();
      const double mu = x[i] <= theta ? 0.2 + 0.5 * x[i] : 0.2 + 0.5 * theta + 2.5 * (x[i] - theta);
      y[i] = mu + 0.1 * rng.normal();
    }
    const auto cands = default_break_candidates(x);
    const double step = cands[1] - cands[0];
    const auto f = fit_bilinear(y, x);
    hits += std::abs(f.theta_sa - theta) <= step + 1e-12 ? 1 : 0;
  }
  CHECK(hits >= 190);
}

TEST_CASE("variance function interpolation and constants") {
  const Eigen::Vector3d im(0.1, 0.5, 1.0);
  const Eigen::VectorXd log_im = im.array().log();
  const Eigen::VectorXd sigma = (0.1 + 0.2 * im.array() + 0.05 * im.array().square()).matrix();
  const auto f = fit_variance_function(log_im, sigma);
  CHECK(f.beta1 == doctest::Approx(0.1));
  CHECK(f.beta2 == doctest::Approx(0.2));
  CHECK(f.beta3 == doctest::Approx(0.05));
  CHECK_FALSE(f.negative_prediction);
  const auto c = fit_variance_function(log_im, Eigen::Vector3d::Constant(0.3));
  CHECK(c.beta1 == doctest::Approx(0.3));
  CHECK(std::abs(c.beta2) < 1e-10);
  CHECK(std::abs(c.beta3) < 1e-10);
  CHECK(throws_code([] { fit_variance_function(Eigen::Vector3d(0.1, 0.1, 0.2), Eigen::Vector3d(1, 1, 1)); },
                    ErrorCode::kRankDeficient));
  const auto lg = fit_variance_function(log_im, (1.0 + 0.2 * log_im.array()).matrix(), IntensityScale::kLog);
  CHECK(lg.beta2 == doctest::Approx(0.2));
  CHECK(lg.predict(log_im[1]) == doctest::Approx(1.0 + 0.2 * log_im[1]));
}

TEST_CASE("variance function tracks the true sd on synthetic stripes") {
  const UnivariateTruth truth = *truth_preset("harvey-trumpet").univariate;
  std::vector<double> err_mid;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = generate_univariate(truth, table1_grid(), seed);
    const auto stripes = build_stripes(d);
    const auto sum = stripe_summary(d, stripes);
    Eigen::VectorXd lv(static_cast<Eigen::Index>(sum.size())), sd(lv.size());
    for (std::size_t i = 0; i < sum.size(); ++i) {
      lv[static_cast<Eigen::Index>(i)] = sum[i].level;
      sd[static_cast<Eigen::Index>(i)] = sum[i].std[0];
    }
    const auto f = fit_variance_function(lv, sd);
    double worst = 0.0;
    for (Eigen::Index i = 2; i + 2 < lv.size(); ++i) worst = std::max(worst, std::abs(f.predict(lv[i]) - truth.sd(lv[i])));
    err_mid.push_back(worst);
  }
  std::nth_element(err_mid.begin(), err_mid.begin() + 50, err_mid.end());
  CHECK(err_mid[50] < 0.05);
}

TEST_CASE("mlr reductions") {
  const auto d = generate(truth_preset("harvey-trumpet"), table1_grid(6), 1);
  const auto m = fit_mlr(d.y(), d.x());
  const auto o = fit_ols(d.demand(0), line_design(d.x()));
  CHECK(m.beta0()[0] == doctest::Approx(o.coeffs[0]));
  CHECK(m.beta1()[0] == doctest::Approx(o.coeffs[1]));
  CHECK(m.sigma(0, 0) == doctest::Approx(o.sigma * o.sigma));
  const auto ml = fit_mlr(d.y(), d.x(), CovDivisor::kMaximumLikelihood);
  CHECK(ml.sigma(0, 0) == doctest::Approx(o.sse / static_cast<double>(d.n())));

  Eigen::MatrixXd y2(d.n(), 2);
  y2 << d.demand(0), 2.0 * d.demand(0);
  const auto dep = fit_mlr(y2, d.x());
  CHECK(dep.coeffs(1, 0) == doctest::Approx(2.0 * dep.coeffs(0, 0)));
  CHECK(dep.coeffs(1, 1) == doctest::Approx(2.0 * dep.coeffs(0, 1)));
  CHECK(dep.singular_sigma);
  CHECK_FALSE(m.singular_sigma);
}

TEST_CASE("mlr sigma diagonal equals per-column ols variance") {
  const auto d = generate(truth_preset("paper-like"), table1_grid(10), 2);
  const auto m = fit_mlr(d.y(), d.x());
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    const auto o = fit_ols(d.demand(j), line_design(d.x()));
    CHECK(m.sigma(j, j) == doctest::Approx(o.sigma * o.sigma).epsilon(1e-12));
  }
}

TEST_CASE("mlr recovers a homoscedastic covariance") {
  Eigen::Matrix3d sigma;
  sigma << 0.04, 0.02, 0.01, 0.02, 0.09, 0.03, 0.01, 0.03, 0.05;
  const Eigen::Matrix3d L = sigma.llt().matrixL();
  std::vector<double> errs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed, 0);
    const int n = 2000;
    Eigen::VectorXd x(n);
    Eigen::MatrixXd y(n, 3);
    for (int i = 0; i < n; ++i) {
      x[i] = -2.3 + 0.1 * (i % 25);
      Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
      y.row(i) = (Eigen::Vector3d(0.1, 0.2, 0.3) + x[i] * Eigen::Vector3d(1.0, 0.8, 1.1) + L * z).transpose();
    }
    errs.push_back((fit_mlr(y, x).sigma - sigma).norm() / sigma.norm());
  }
  std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
  CHECK(errs[50] < 0.1);
}

TEST_CASE("box-cox transform") {
  const Eigen::Vector3d y(0.5, 1.0, 4.0);
  CHECK((box_cox(y, 1.0) - (y.array() - 1.0).matrix()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((box_cox(y, 0.0) - y.array().log().matrix()).cwiseAbs().maxCoeff() < 1e-15);
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(100, 0.1, 10.0);
  CHECK((box_cox(grid, 1e-8) - grid.array().log().matrix()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(throws_code([] { box_cox(Eigen::Vector2d(1.0, 0.0), 0.5); }, ErrorCode::kNonPositiveResponse));
}

TEST_CASE("box-cox estimate finds the log transform") {
  std::vector<double> lambdas;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed, 0);
    const int n = 1000;
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = -2.3 + 2.4 * rng.uniform();
      y[i] = std::exp(0.5 + 1.2 * x[i] + 0.3 * rng.normal());
    }
    lambdas.push_back(box_cox_estimate(y, line_design(x)).lambda);
  }
  std::nth_element(lambdas.begin(), lambdas.begin() + 50, lambdas.end());
  CHECK(std::abs(lambdas[50]) <= 0.1);
}
