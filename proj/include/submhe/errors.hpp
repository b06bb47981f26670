#pragma once

#include <stdexcept>
#include <string>

namespace submhe {

/// Base error. `kind()` is the stable machine-readable name (e.g.
/// "DimensionMismatch") and `field()` the config path when one applies.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(std::move(kind)), field_(std::move(field)) {}

  const std::string& kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string kind_;
  std::string field_;
};

namespace error_kind {
inline constexpr const char* kDimensionMismatch = "DimensionMismatch";
inline constexpr const char* kBoxExcludesOrigin = "BoxExcludesOrigin";
inline constexpr const char* kNotFound = "NotFound";
inline constexpr const char* kWindowLengthMismatch = "WindowLengthMismatch";
inline constexpr const char* kDegenerateHessian = "DegenerateHessian";
inline constexpr const char* kNonfiniteIterate = "NonfiniteIterate";
inline constexpr const char* kMaxCyclesExceeded = "MaxCyclesExceeded";
inline constexpr const char* kDivergentTrajectory = "DivergentTrajectory";
inline constexpr const char* kStabilityAssumptionViolated = "StabilityAssumptionViolated";
inline constexpr const char* kInvalidParams = "InvalidParams";
inline constexpr const char* kContractionViolated = "ContractionViolated";
inline constexpr const char* kNotFoundBelowCap = "NotFoundBelowCap";
inline constexpr const char* kUnboundedSampleBox = "UnboundedSampleBox";
inline constexpr const char* kMonitorViolation = "MonitorViolation";
inline constexpr const char* kParseError = "ParseError";
inline constexpr const char* kValidationError = "ValidationError";
inline constexpr const char* kLmiViolated = "LmiViolated";
inline constexpr const char* kUncertifiedRun = "UncertifiedRun";
}  // namespace error_kind

inline Error dimension_mismatch(const std::string& what) {
  return Error(error_kind::kDimensionMismatch, "dimension mismatch: " + what);
}

/// Raised when rho = 6^(1/M) * eta >= 1. Carries the smallest horizon that
/// would restore rho < 1 (0 when no horizon can, i.e. eta >= 1/6^0).
class ContractionViolated : public Error {
 public:
  ContractionViolated(double rho, int minimal_horizon)
      : Error(error_kind::kContractionViolated,
              "rho = " + std::to_string(rho) + " >= 1; smallest horizon with rho < 1 is M = " +
                  std::to_string(minimal_horizon)),
        rho_(rho),
        minimal_horizon_(minimal_horizon) {}

  double rho() const noexcept { return rho_; }
  int minimal_horizon() const noexcept { return minimal_horizon_; }

 private:
  double rho_;
  int minimal_horizon_;
};

}  // namespace submhe
