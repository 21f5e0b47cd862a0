#include "hetdemand/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hetdemand/error.hpp"

namespace hetdemand {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(const std::string& field, std::size_t row) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (!field.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorCode::kNonFiniteValue,
                "row " + std::to_string(row) + ": '" + field + "' is not a finite decimal");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

DemandDataset::DemandDataset(Eigen::VectorXd log_intensity, Eigen::MatrixXd log_demand,
                             std::vector<std::string> labels, std::string intensity_label,
                             bool log_transformed_on_load)
    : x_(std::move(log_intensity)),
      y_(std::move(log_demand)),
      labels_(std::move(labels)),
      intensity_label_(std::move(intensity_label)),
      log_transformed_(log_transformed_on_load) {
  if (y_.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "dataset needs at least one demand column");
  if (y_.rows() != x_.size()) throw Error(ErrorCode::kInvalidArgument, "intensity/demand row count mismatch");
  if (labels_.empty()) {
    for (Eigen::Index j = 0; j < y_.cols(); ++j) labels_.push_back("d" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(labels_.size()) != y_.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "label count does not match demand columns");
  }
  for (Eigen::Index i = 0; i < x_.size(); ++i) {
    if (!std::isfinite(x_[i]) || !y_.row(i).allFinite()) {
      throw Error(ErrorCode::kNonFiniteValue, "row " + std::to_string(i) + " has a non-finite value");
    }
  }
  if (x_.size() < 2 || x_.minCoeff() == x_.maxCoeff()) {
    throw Error(ErrorCode::kInsufficientData, "dataset needs at least two distinct intensity values");
  }
}

Eigen::VectorXd DemandDataset::demand(Eigen::Index j) const {
  if (j < 0 || j >= p()) throw Error(ErrorCode::kInvalidArgument, "demand index out of range");
  return y_.col(j);
}

DemandDataset DemandDataset::subset(const std::vector<std::size_t>& rows) const {
  Eigen::VectorXd xs(static_cast<Eigen::Index>(rows.size()));
  Eigen::MatrixXd ys(static_cast<Eigen::Index>(rows.size()), p());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    if (i >= n()) throw Error(ErrorCode::kInvalidArgument, "subset row out of range");
    xs[static_cast<Eigen::Index>(k)] = x_[i];
    ys.row(static_cast<Eigen::Index>(k)) = y_.row(i);
  }
  return DemandDataset(std::move(xs), std::move(ys), labels_, intensity_label_, log_transformed_);
}

DemandDataset load_dataset(std::istream& source, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(source, line)) throw Error(ErrorCode::kIo, "empty input: missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = split_csv_line(line);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t x_col = column_of(schema.intensity_column);
  std::vector<std::size_t> y_cols;
  std::vector<std::string> labels;
  if (schema.demand_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != x_col) {
        y_cols.push_back(c);
        labels.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.demand_columns) {
      y_cols.push_back(column_of(name));
      labels.push_back(name);
    }
  }
  if (y_cols.empty()) throw Error(ErrorCode::kMissingColumn, "no demand columns in header");

  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t row = 0;
  while (std::getline(source, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    auto take = [&](std::size_t c) {
      double v = parse_number(fields[c], row);
      if (!schema.log_space) {
        if (!(v > 0.0)) {
          throw Error(ErrorCode::kNonPositiveValue,
                      "row " + std::to_string(row) + ": value " + fields[c] + " cannot be log-transformed");
        }
        v = std::log(v);
      }
      return v;
    };
    xs.push_back(take(x_col));
    for (std::size_t c : y_cols) ys.push_back(take(c));
    ++row;
  }

  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto p = static_cast<Eigen::Index>(y_cols.size());
  Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), n);
  Eigen::MatrixXd y = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(ys.data(), n, p);
  const std::string x_label = schema.log_space ? schema.intensity_column : "ln_" + schema.intensity_column;
  return DemandDataset(std::move(x), std::move(y), std::move(labels), x_label, !schema.log_space);
}

void write_dataset(std::ostream& out, const DemandDataset& data) {
  out << data.intensity_label();
  for (const auto& label : data.labels()) out << ',' << label;
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_double(data.x()[i]);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_double(data.y()(i, j));
    out << '\n';
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".meta.json");
}

void save_dataset_file(const std::filesystem::path& path, const DemandDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  write_dataset(out, data);
  std::ofstream meta(sidecar_path(path), std::ios::binary);
  if (!meta) throw Error(ErrorCode::kIo, "cannot write dataset sidecar for '" + path.string() + "'");
  nlohmann::json doc;
  doc["format"] = "hetdemand-dataset";
  doc["log_space"] = true;
  doc["intensity_column"] = data.intensity_label();
  doc["labels"] = data.labels();
  doc["rows"] = data.n();
  meta << doc.dump(2) << '\n';
  if (!out || !meta) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

DemandDataset load_dataset_file(const std::filesystem::path& path, const CsvSchema* schema_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  CsvSchema schema;
  if (schema_override != nullptr) {
    schema = *schema_override;
  } else if (std::ifstream meta(sidecar_path(path)); meta) {
    try {
      const auto doc = nlohmann::json::parse(meta);
      schema.log_space = doc.value("log_space", true);
      schema.intensity_column = doc.value("intensity_column", schema.intensity_column);
      schema.demand_columns = doc.value("labels", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, "malformed sidecar for '" + path.string() + "': " + e.what());
    }
  } else {
    // Without a sidecar the first column is the intensity.
    std::string header;
    std::getline(in, header);
    const auto fields = split_csv_line(header);
    if (fields.empty() || fields.front().empty()) throw Error(ErrorCode::kMissingColumn, "empty header");
    schema.intensity_column = fields.front();
    in.clear();
    in.seekg(0);
  }
  return load_dataset(in, schema);
}

void validate_basis(const BasisConfig& config) {
  if (config.degree < 0) throw Error(ErrorCode::kInvalidArgument, "basis degree must be >= 0");
  if (config.degree > 3 && !config.allow_high_degree) {
    throw Error(ErrorCode::kInvalidArgument, "basis degree above 3 requires an explicit override");
  }
}

Eigen::VectorXd polynomial_basis(double x, const BasisConfig& config) {
  validate_basis(config);
  if (!std::isfinite(x)) throw Error(ErrorCode::kNonFiniteValue, "basis argument must be finite");
  Eigen::VectorXd b(config.degree + 1);
  b[0] = 1.0;
  for (int k = 1; k <= config.degree; ++k) b[k] = b[k - 1] * x;
  return b;
}

Eigen::MatrixXd design_matrix(const Eigen::VectorXd& x, const BasisConfig& config) {
  validate_basis(config);
  Eigen::MatrixXd m(x.size(), config.degree + 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) m.row(i) = polynomial_basis(x[i], config).transpose();
  return m;
}

StripeSet build_stripes(const DemandDataset& data, double tolerance) {
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "stripe tolerance must be >= 0");
  const auto& x = data.x();
  std::vector<std::size_t> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[static_cast<Eigen::Index>(a)] < x[static_cast<Eigen::Index>(b)];
  });

  StripeSet set;
  set.tolerance = tolerance;
  double prev = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double xi = x[static_cast<Eigen::Index>(order[k])];
    if (k == 0 || xi - prev > tolerance) set.stripes.emplace_back();
    set.stripes.back().members.push_back(order[k]);
    prev = xi;
  }
  for (auto& s : set.stripes) {
    std::sort(s.members.begin(), s.members.end());
    double sum = 0.0;
    for (std::size_t i : s.members) sum += x[static_cast<Eigen::Index>(i)];
    s.level = sum / static_cast<double>(s.members.size());
  }

  // Every member must sit within tolerance of its own center and of no other.
  for (std::size_t k = 0; k < set.stripes.size(); ++k) {
    for (std::size_t i : set.stripes[k].members) {
      const double xi = x[static_cast<Eigen::Index>(i)];
      if (std::abs(xi - set.stripes[k].level) > tolerance * (1.0 + 1e-12) + 1e-15) {
        throw Error(ErrorCode::kOverlappingStripes,
                    "row " + std::to_string(i) + " is farther than the tolerance from its stripe center");
      }
      for (std::size_t other : {k - 1, k + 1}) {
        if (other < set.stripes.size() && std::abs(xi - set.stripes[other].level) <= tolerance) {
          throw Error(ErrorCode::kOverlappingStripes,
                      "row " + std::to_string(i) + " lies within tolerance of two stripe centers");
        }
      }
    }
  }
  return set;
}

bool StripeSummary::corr_defined(Eigen::Index j, Eigen::Index k) const { return !std::isnan(corr(j, k)); }

std::vector<StripeSummary> stripe_summary(const DemandDataset& data, const StripeSet& stripes) {
  const Eigen::Index p = data.p();
  std::vector<StripeSummary> out;
  out.reserve(stripes.stripes.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : stripes.stripes) {
    if (s.members.empty()) throw Error(ErrorCode::kInvalidArgument, "empty stripe");
    StripeSummary sum;
    sum.level = s.level;
    sum.n = s.members.size();
    Eigen::MatrixXd block(static_cast<Eigen::Index>(sum.n), p);
    for (std::size_t k = 0; k < sum.n; ++k) {
      block.row(static_cast<Eigen::Index>(k)) = data.y().row(static_cast<Eigen::Index>(s.members[k]));
    }
    sum.mean = block.colwise().mean().transpose();
    sum.std = Eigen::VectorXd::Constant(p, nan);
    sum.corr = Eigen::MatrixXd::Constant(p, p, nan);
    if (sum.n >= 2) {
      const Eigen::MatrixXd centered = block.rowwise() - sum.mean.transpose();
      const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(sum.n - 1);
      sum.std = cov.diagonal().cwiseSqrt();
      for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < p; ++k) {
          if (sum.std[j] > 0.0 && sum.std[k] > 0.0) {
            sum.corr(j, k) = (j == k) ? 1.0 : std::clamp(cov(j, k) / std::sqrt(cov(j, j) * cov(k, k)), -1.0, 1.0);
          }
        }
      }
    }
    out.push_back(std::move(sum));
  }
  return out;
}

}  // namespace hetdemand
