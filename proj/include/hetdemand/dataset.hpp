#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hetdemand {

// Rows of (log-intensity, log-demand vector). Intensities and demands are
// always held in natural-log space; natural-space values only appear at I/O.
class DemandDataset {
 public:
  // Validates: p >= 1, all values finite, at least two distinct x values.
  DemandDataset(Eigen::VectorXd log_intensity, Eigen::MatrixXd log_demand, std::vector<std::string> labels,
                std::string intensity_label = "ln_im", bool log_transformed_on_load = false);

  [[nodiscard]] Eigen::Index n() const { return x_.size(); }
  [[nodiscard]] Eigen::Index p() const { return y_.cols(); }
  [[nodiscard]] const Eigen::VectorXd& x() const { return x_; }
  [[nodiscard]] const Eigen::MatrixXd& y() const { return y_; }
  [[nodiscard]] Eigen::VectorXd demand(Eigen::Index j) const;
  [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }
  [[nodiscard]] const std::string& intensity_label() const { return intensity_label_; }
  // True when the source file held natural-space values that were logged on load.
  [[nodiscard]] bool log_transformed_on_load() const { return log_transformed_; }

  // Rows selected by index, same labels.
  [[nodiscard]] DemandDataset subset(const std::vector<std::size_t>& rows) const;

 private:
  Eigen::VectorXd x_;
  Eigen::MatrixXd y_;
  std::vector<std::string> labels_;
  std::string intensity_label_;
  bool log_transformed_;
};

struct CsvSchema {
  std::string intensity_column = "ln_im";
  // Empty selects every column after the intensity column, in file order.
  std::vector<std::string> demand_columns;
  // False: values are natural-space, must be > 0, and are logged on load.
  bool log_space = true;
};

DemandDataset load_dataset(std::istream& source, const CsvSchema& schema);

// Writes header + rows in log space using shortest round-trip decimal
// formatting, so reloading reproduces every double exactly.
void write_dataset(std::ostream& out, const DemandDataset& data);

// File helpers. The sidecar `<path>.meta.json` records the log/natural flag,
// the intensity column and the demand labels; when present on load it
// supplies the schema unless `schema_override` is given.
void save_dataset_file(const std::filesystem::path& path, const DemandDataset& data);
DemandDataset load_dataset_file(const std::filesystem::path& path, const CsvSchema* schema_override = nullptr);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

// --- Polynomial basis -------------------------------------------------------

struct BasisConfig {
  int degree = 3;
  // Degrees above 3 are rejected unless explicitly allowed.
  bool allow_high_degree = false;
};

void validate_basis(const BasisConfig& config);

// (1, x, x^2, ..., x^degree).
Eigen::VectorXd polynomial_basis(double x, const BasisConfig& config);
Eigen::MatrixXd design_matrix(const Eigen::VectorXd& x, const BasisConfig& config);

// --- Stripes ----------------------------------------------------------------

struct Stripe {
  double level = 0.0;                // mean log-intensity of the members
  std::vector<std::size_t> members;  // row indices, ascending
};

struct StripeSet {
  std::vector<Stripe> stripes;  // ascending level
  double tolerance = 1e-9;
};

constexpr double kDefaultStripeTolerance = 1e-9;

// Groups rows whose sorted log-intensities chain together with gaps <=
// tolerance. Throws OverlappingStripes if a member ends up farther than
// tolerance from its own center or within tolerance of another center.
StripeSet build_stripes(const DemandDataset& data, double tolerance = kDefaultStripeTolerance);

struct StripeSummary {
  double level = 0.0;
  std::size_t n = 0;
  Eigen::VectorXd mean;
  // Divisor n - 1; NaN when n < 2.
  Eigen::VectorXd std;
  // Pearson correlation; NaN marks entries where either std is 0 or undefined.
  Eigen::MatrixXd corr;

  [[nodiscard]] bool std_defined() const { return n >= 2; }
  [[nodiscard]] bool corr_defined(Eigen::Index j, Eigen::Index k) const;
};

std::vector<StripeSummary> stripe_summary(const DemandDataset& data, const StripeSet& stripes);

}  // namespace hetdemand
