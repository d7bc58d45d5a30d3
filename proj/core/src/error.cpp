#include "esh/error.hpp"

namespace esh {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kRankDeficient: return "rank_deficient";
    case ErrorCode::kSolverFailure: return "solver_failure";
    case ErrorCode::kCorruption: return "corruption";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kDegenerate: return "degenerate";
  }
  return "unknown";
}

}  // namespace esh
