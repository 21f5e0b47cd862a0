#include "hetdemand/error.hpp"

namespace hetdemand {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kNonPositiveValue: return "NonPositiveValue";
    case ErrorCode::kOverlappingStripes: return "OverlappingStripes";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kNonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDegenerateBranch: return "DegenerateBranch";
    case ErrorCode::kNonPositiveResponse: return "NonPositiveResponse";
    case ErrorCode::kZeroResidualVariance: return "ZeroResidualVariance";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kPsiNotPD: return "PsiNotPD";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kInvalidDof: return "InvalidDof";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kDegenerateChains: return "DegenerateChains";
    case ErrorCode::kDegenerateSubmatrix: return "DegenerateSubmatrix";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace hetdemand
