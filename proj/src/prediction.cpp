#include "hetdemand/prediction.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

#include "hetdemand/error.hpp"

namespace hetdemand {

Eigen::VectorXd make_grid(double start, double stop, double step) {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step) || !(step > 0.0) || stop < start - 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs finite start <= stop and step > 0");
  }
  const auto count = static_cast<Eigen::Index>(std::floor((stop - start + 1e-9) / step)) + 1;
  Eigen::VectorXd grid(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    double v = start + static_cast<double>(k) * step;
    if (std::abs(v - stop) <= 1e-9) v = stop;
    // Snap accumulated error so 0.1-step grids print as written.
    v = std::round(v * 1e12) / 1e12;
    grid[k] = v;
  }
  return grid;
}

Eigen::VectorXd parse_grid_spec(const std::string& spec) {
  std::vector<double> parts;
  std::size_t start = 0;
  for (;;) {
    const auto colon = spec.find(':', start);
    const std::string token = spec.substr(start, colon - start);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
      throw Error(ErrorCode::kInvalidArgument, "grid '" + spec + "' must be start:stop:step");
    }
    parts.push_back(v);
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 3) throw Error(ErrorCode::kInvalidArgument, "grid '" + spec + "' must be start:stop:step");
  return make_grid(parts[0], parts[1], parts[2]);
}

}  // namespace hetdemand
