#pragma once

#include <string>

#include <Eigen/Dense>

namespace hetdemand {

struct TestResult {
  double statistic = 0.0;
  int dof = 1;
  double p_value = 1.0;  // chi-square upper tail at (statistic, dof)
  std::string variant;
};

enum class BreuschPaganVariant {
  kStudentized,  // Koenker: n R^2 of e^2 on Z
  kOriginal,     // LM: half the explained sum of squares of e^2 / (SSE / n) on Z
};

// `z` must contain a constant column and have fewer columns than rows.
TestResult breusch_pagan(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& z,
                         BreuschPaganVariant variant = BreuschPaganVariant::kStudentized);

// Auxiliary design from the mean-model design: constant, the distinct
// non-constant covariates, their squares and (optionally) pairwise
// products, with duplicate columns dropped.
Eigen::MatrixXd white_auxiliary_design(const Eigen::MatrixXd& x, bool cross_products = true);

// n R^2 of e^2 on white_auxiliary_design(x).
TestResult white_test(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& x, bool cross_products = true);

}  // namespace hetdemand
