#pragma once

#include <stdexcept>
#include <string>

namespace rfuse {

enum class ErrorCode {
  InvalidProblem,
  InvalidWeightingMatrix,
  MissingCovariance,
  NotConverged,
  InvalidGroundTruth,
  IdentificationFailure,
  SingularSystem,
  InvalidCovariance,
  InvalidContrast,
  EmptySelection,
  InvalidDesign,
  ParseError,
  DimensionMismatch,
  NonSpdCovariance,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the C
// API can map it onto a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace rfuse
