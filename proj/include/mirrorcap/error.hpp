#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mirrorcap {

enum class ErrorCode {
  NonPositiveDepth,
  NoIntersection,
  NonUnitNormal,
  NoMirrorIntersection,
  AmbiguousAssociation,
  WrongPersonCount,
  DegenerateMotion,
  NoConvergence,
  NoValidFrames,
  AnklesCoincide,
  DegenerateGeometry,
  DegenerateRotation,
  NoDecrease,
  NaNDetected,
  NoBoxIntersection,
  OutOfBounds,
  DimensionMismatch,
  DegenerateConfiguration,
  ZeroPose,
  PersonBehindMirror,
  ParseError,
  UnknownSchema,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this type. `stage` is filled in by the
// pipeline driver when an error crosses a stage boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  ErrorCode code_;
  std::string stage_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::NonUnitNormal: return "NonUnitNormal";
    case ErrorCode::NoMirrorIntersection: return "NoMirrorIntersection";
    case ErrorCode::AmbiguousAssociation: return "AmbiguousAssociation";
    case ErrorCode::WrongPersonCount: return "WrongPersonCount";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NoValidFrames: return "NoValidFrames";
    case ErrorCode::AnklesCoincide: return "AnklesCoincide";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::DegenerateRotation: return "DegenerateRotation";
    case ErrorCode::NoDecrease: return "NoDecrease";
    case ErrorCode::NaNDetected: return "NaNDetected";
    case ErrorCode::NoBoxIntersection: return "NoBoxIntersection";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::ZeroPose: return "ZeroPose";
    case ErrorCode::PersonBehindMirror: return "PersonBehindMirror";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownSchema: return "UnknownSchema";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace mirrorcap
