#pragma once

#include <stdexcept>
#include <string>

namespace labscreen {

enum class ErrorKind {
  InvalidInput,
  InvalidKnots,
  MissingCovariate,
  SingularDesign,
  Underdetermined,
  Domain,
  InconsistentInput,
  NestingViolation,
  InsufficientData,
  ScanFailure,
  UnknownLab,
  InsufficientControls,
  Parse,
  DegenerateLabels,
  Pairing,
  Config,
  Io,
};

/// Library-wide exception. `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures of the numerical machinery rather than of the data.
  bool is_numerical() const noexcept;

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace labscreen
