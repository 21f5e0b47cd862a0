#pragma once

#include <string>

#include <Eigen/Dense>

namespace hetdemand {

// Pointwise bands over a log-intensity grid. cred_* bounds the mean
// response, pred_* a new observation; both at the same `level`.
struct PredictionBands {
  Eigen::VectorXd grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::VectorXd cred_lo, cred_hi;
  Eigen::VectorXd pred_lo, pred_hi;
  double level = 0.9;
};

// start:stop:step, endpoints included within 1e-9.
Eigen::VectorXd parse_grid_spec(const std::string& spec);
Eigen::VectorXd make_grid(double start, double stop, double step);

}  // namespace hetdemand
