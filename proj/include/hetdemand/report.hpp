#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "hetdemand/baseline.hpp"
#include "hetdemand/covreg.hpp"
#include "hetdemand/diagnostics.hpp"
#include "hetdemand/harvey.hpp"
#include "hetdemand/prediction.hpp"

namespace hetdemand {

inline constexpr std::string_view kToolName = "hetdemand";
std::string_view tool_version();

// 64-bit FNV-1a, rendered as "fnv1a64:" followed by 16 hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_label(std::uint64_t hash);
// Hash of the file bytes; Io error when unreadable.
std::string file_hash(const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_double(double v);

// --- JSON conversion ----------------------------------------------------------
// NaN and infinities are written as null and read back as NaN.

nlohmann::json to_json(const Eigen::MatrixXd& m);
nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LinearFit& fit);
LinearFit linear_fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BilinearFit& fit);
BilinearFit bilinear_fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VarianceFunctionFit& fit);
nlohmann::json to_json(const MLRFit& fit);
nlohmann::json to_json(const TestResult& result);

nlohmann::json to_json(const HarveyFit& fit);
HarveyFit harvey_fit_from_json(const nlohmann::json& j);
// Includes every retained draw so that predictions can be rebuilt later.
nlohmann::json to_json(const HarveyPosterior& posterior);
HarveyPosterior harvey_posterior_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CovRegFit& fit);
CovRegFit covreg_fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CovRegPosterior& posterior);
CovRegPosterior covreg_posterior_from_json(const nlohmann::json& j);

// Envelope shared by every fit/test document.
struct Provenance {
  std::string command;
  std::string model;
  std::uint64_t seed = 0;
  std::string input_path;
  std::string input_hash;
};

nlohmann::json make_document(const Provenance& prov, nlohmann::json spec, nlohmann::json result,
                             const std::vector<std::string>& warnings);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

// --- CSV --------------------------------------------------------------------

// grid_x,mean,sd,cred_lo,cred_hi,pred_lo,pred_hi
void write_prediction_csv(std::ostream& out, const PredictionBands& bands);
// grid_x then rho_j_k_median, rho_j_k_lo, rho_j_k_hi per pair (1-based labels).
void write_curves_csv(std::ostream& out, const CorrelationCurves& curves);

struct EllipseRow {
  double ln_im = 0.0;
  std::pair<int, int> pair;  // 0-based
  Ellipse ellipse;
};
// ln_im,pair_j,pair_k,level,chi2,center_1,center_2,semi_major,semi_minor,angle
void write_ellipse_csv(std::ostream& out, const std::vector<EllipseRow>& rows);

// chain,iteration,<parameter names>
void write_draws_csv(std::ostream& out, const HarveyPosterior& posterior);
// chain,iteration,A_j_k...,B1_j_k...,Psi_j_k... (row-major, 1-based)
void write_draws_csv(std::ostream& out, const CovRegPosterior& posterior);

}  // namespace hetdemand
