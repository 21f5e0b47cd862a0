#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdemand/dataset.hpp"

namespace hetdemand {

struct GridLevel {
  double ln_sa = 0.0;
  double sa = 0.0;  // g
};

struct ScalingGrid {
  std::vector<GridLevel> levels;
  int records_per_level = 80;

  [[nodiscard]] Eigen::Index rows() const {
    return static_cast<Eigen::Index>(levels.size()) * records_per_level;
  }
  [[nodiscard]] Eigen::VectorXd ln_sa() const;
};

// 25 levels, ln Sa = -2.3, -2.2, ..., 0.1.
ScalingGrid table1_grid(int records_per_level = 80);

// y = basis(x)^T beta + exp(basis(x)^T gamma / 2) z; basis degrees follow the
// vector lengths.
struct UnivariateTruth {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;

  [[nodiscard]] double mean(double x) const;
  [[nodiscard]] double sd(double x) const;
};

struct MultivariateTruth {
  Eigen::MatrixXd A;               // p x q
  std::vector<Eigen::MatrixXd> B;  // rank matrices, p x q
  Eigen::MatrixXd Psi;

  [[nodiscard]] int basis_degree() const { return static_cast<int>(A.cols()) - 1; }
  [[nodiscard]] Eigen::VectorXd mean(double x) const;
  [[nodiscard]] Eigen::MatrixXd covariance(double x) const;
  [[nodiscard]] Eigen::MatrixXd correlation(double x) const;
};

DemandDataset generate_univariate(const UnivariateTruth& truth, const ScalingGrid& grid, std::uint64_t seed);

enum class MultivariateSampling {
  kRandomEffects,  // A x + sum_k gamma_k B_k x + eps
  kMarginal,       // Normal(A x, Sigma_x) directly
};

// Throws NotPositiveDefinite when Psi is not PD.
DemandDataset generate_multivariate(const MultivariateTruth& truth, const ScalingGrid& grid, std::uint64_t seed,
                                    MultivariateSampling sampling = MultivariateSampling::kRandomEffects);

// A named truth holds exactly one of the two forms.
struct SyntheticTruth {
  std::string name;
  std::optional<UnivariateTruth> univariate;
  std::optional<MultivariateTruth> multivariate;
};

// "paper-like"      three components, U-shaped rho12 and rho23, rho13 > 0.9
// "harvey-trumpet"  one component, beta (0.5, 1.2, 0.1, -0.05), gamma (-2, 0.8, 0, 0)
// "homoscedastic"   one component, same mean, constant sd 0.3
// These values are synthetic. Unknown names throw InvalidArgument.
SyntheticTruth truth_preset(const std::string& name);
std::vector<std::string> truth_preset_names();

DemandDataset generate(const SyntheticTruth& truth, const ScalingGrid& grid, std::uint64_t seed);

std::string truth_to_json(const SyntheticTruth& truth);
SyntheticTruth truth_from_json(const std::string& text);
void save_truth_file(const std::filesystem::path& path, const SyntheticTruth& truth);
SyntheticTruth load_truth_file(const std::filesystem::path& path);

}  // namespace hetdemand
