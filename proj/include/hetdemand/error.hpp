#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetdemand {

enum class ErrorCode {
  kInvalidArgument,
  kMissingColumn,
  kNonFiniteValue,
  kNonPositiveValue,
  kOverlappingStripes,
  kRankDeficient,
  kNonPositiveWeight,
  kInsufficientData,
  kDegenerateBranch,
  kNonPositiveResponse,
  kZeroResidualVariance,
  kNotConverged,
  kPsiNotPD,
  kNotPositiveDefinite,
  kInvalidDof,
  kDomainError,
  kDegenerateChains,
  kDegenerateSubmatrix,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type; code() is the stable
// machine-readable category, what() carries the human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hetdemand
