#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlar {

enum class ErrorCode {
  InvalidParameter,
  NoUnitRoot,
  UnstableRemainder,
  HistoryLengthMismatch,
  RescaleUndefined,
  DimensionMismatch,
  NotContractive,
  DomainError,
  BudgetExceeded,
  NotCovered,
  BorderlineAmbiguous,
  EnvelopeMissing,
  DegenerateSeries,
  InsufficientDecay,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NoUnitRoot: return "NoUnitRoot";
    case ErrorCode::UnstableRemainder: return "UnstableRemainder";
    case ErrorCode::HistoryLengthMismatch: return "HistoryLengthMismatch";
    case ErrorCode::RescaleUndefined: return "RescaleUndefined";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotContractive: return "NotContractive";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::NotCovered: return "NotCovered";
    case ErrorCode::BorderlineAmbiguous: return "BorderlineAmbiguous";
    case ErrorCode::EnvelopeMissing: return "EnvelopeMissing";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::InsufficientDecay: return "InsufficientDecay";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace nlar
