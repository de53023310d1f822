#include "labscreen/errors.hpp"

namespace labscreen {

bool Error::is_numerical() const noexcept {
  switch (kind_) {
    case ErrorKind::SingularDesign:
    case ErrorKind::Underdetermined:
    case ErrorKind::NestingViolation:
    case ErrorKind::ScanFailure:
      return true;
    default:
      return false;
  }
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidKnots: return "invalid-knots";
    case ErrorKind::MissingCovariate: return "missing-covariate";
    case ErrorKind::SingularDesign: return "singular-design";
    case ErrorKind::Underdetermined: return "underdetermined";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::InconsistentInput: return "inconsistent-input";
    case ErrorKind::NestingViolation: return "nesting-violation";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::ScanFailure: return "scan-failure";
    case ErrorKind::UnknownLab: return "unknown-lab";
    case ErrorKind::InsufficientControls: return "insufficient-controls";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DegenerateLabels: return "degenerate-labels";
    case ErrorKind::Pairing: return "pairing";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace labscreen
