#include "rfuse/error.hpp"

namespace rfuse {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidProblem: return "InvalidProblem";
    case ErrorCode::InvalidWeightingMatrix: return "InvalidWeightingMatrix";
    case ErrorCode::MissingCovariance: return "MissingCovariance";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::InvalidGroundTruth: return "InvalidGroundTruth";
    case ErrorCode::IdentificationFailure: return "IdentificationFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::InvalidCovariance: return "InvalidCovariance";
    case ErrorCode::InvalidContrast: return "InvalidContrast";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::InvalidDesign: return "InvalidDesign";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonSpdCovariance: return "NonSpdCovariance";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace rfuse
