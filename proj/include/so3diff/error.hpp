#pragma once

#include <stdexcept>
#include <string>

namespace so3diff {

enum class ErrorCode {
  NotSkew,
  NotRotation,
  NonUnitQuaternion,
  DegenerateFrame,
  NonFiniteDensity,
  NonPositiveDensity,
  NearCutLocus,
  Unconverged,
  NonFiniteField,
  StepTooLarge,
  ShapeMismatch,
  NonFiniteLoss,
  InsufficientSamples,
  InvalidArgument,
  UnknownTarget,
  Format,
  CheckpointVersionMismatch,
  Config,
};

const char* to_string(ErrorCode code) noexcept;

/// Library-wide exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Input/configuration problems as opposed to numeric failures at runtime.
  bool is_validation() const noexcept;

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotSkew: return "NotSkew";
    case ErrorCode::NotRotation: return "NotRotation";
    case ErrorCode::NonUnitQuaternion: return "NonUnitQuaternion";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::NonFiniteDensity: return "NonFiniteDensity";
    case ErrorCode::NonPositiveDensity: return "NonPositiveDensity";
    case ErrorCode::NearCutLocus: return "NearCutLocus";
    case ErrorCode::Unconverged: return "Unconverged";
    case ErrorCode::NonFiniteField: return "NonFiniteField";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::Format: return "Format";
    case ErrorCode::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

inline bool Error::is_validation() const noexcept {
  switch (code_) {
    case ErrorCode::NotSkew:
    case ErrorCode::NotRotation:
    case ErrorCode::NonUnitQuaternion:
    case ErrorCode::DegenerateFrame:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownTarget:
    case ErrorCode::Format:
    case ErrorCode::CheckpointVersionMismatch:
    case ErrorCode::Config:
      return true;
    default:
      return false;
  }
}

}  // namespace so3diff
