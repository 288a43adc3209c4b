#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geomask {

enum class ErrorKind {
  DegenerateLandmarks,
  NonSquareCanvas,
  InvalidParams,
  SingularTransform,
  NotASimilarity,
  UnsupportedFormat,
  CorruptFile,
  IoFailure,
  InvalidConfig,
  ShapeMismatch,
  ManifestMismatch,
  InvalidTarget,
  DivergenceDetected,
  DegenerateTable,
  SchemaViolation,
  DuplicateId,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// All library failures are reported through this exception; `kind()` lets
/// callers branch on the failure class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorKind::NonSquareCanvas: return "NonSquareCanvas";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::SingularTransform: return "SingularTransform";
    case ErrorKind::NotASimilarity: return "NotASimilarity";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::InvalidTarget: return "InvalidTarget";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::DegenerateTable: return "DegenerateTable";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DuplicateId: return "DuplicateId";
  }
  return "Unknown";
}

}  // namespace geomask
