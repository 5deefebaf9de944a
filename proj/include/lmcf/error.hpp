#pragma once

#include <stdexcept>
#include <string>

namespace lmcf {

/// Every failure raised by the library carries one of these kinds so callers
/// (notably the CLI) can map them onto exit codes and messages.
enum class ErrorKind {
  StencilOutOfDomain,
  OutOfDomain,
  EmptyRegion,
  NonSymmetric,
  DegenerateEigenframe,
  MissingThirdDerivative,
  DomainEdge,
  BlowUp,
  LineSearchFailed,
  SingularLinearSystem,
  NotConverged,
  NotConvex,
  MissingOsc,
  PreconditionGap,
  EllipticityViolated,
  RegionTooSmall,
  TooFewRecords,
  InvalidArgument,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::StencilOutOfDomain: return "StencilOutOfDomain";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::DegenerateEigenframe: return "DegenerateEigenframe";
    case ErrorKind::MissingThirdDerivative: return "MissingThirdDerivative";
    case ErrorKind::DomainEdge: return "DomainEdge";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::LineSearchFailed: return "LineSearchFailed";
    case ErrorKind::SingularLinearSystem: return "SingularLinearSystem";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::NotConvex: return "NotConvex";
    case ErrorKind::MissingOsc: return "MissingOsc";
    case ErrorKind::PreconditionGap: return "PreconditionGap";
    case ErrorKind::EllipticityViolated: return "EllipticityViolated";
    case ErrorKind::RegionTooSmall: return "RegionTooSmall";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lmcf
