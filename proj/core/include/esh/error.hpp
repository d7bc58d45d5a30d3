#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace esh {

enum class ErrorCode {
  kIo,
  kFormat,
  kShape,
  kNonFinite,
  kInvalidArgument,
  kRankDeficient,
  kSolverFailure,
  kCorruption,
  kVersionMismatch,
  kDegenerate,
};

/// Stable identifier used in machine-readable error reports.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace esh
