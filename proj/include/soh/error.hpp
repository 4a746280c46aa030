#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soh {

/// Every failure raised by the library carries one of these codes. The CLI maps
/// the code's category onto a process exit status.
enum class Errc {
  // fp_core / linreg / mfp
  NonPositiveInput,
  ConstantInput,
  RankDeficient,
  InsufficientData,
  InvalidAlpha,
  InvalidLevel,
  DimensionMismatch,
  NonConvergence,
  MissingFeature,
  // ingest / features / prelim
  ParseError,
  SchemaVersionMismatch,
  EmptyHistory,
  TooFewSamples,
  NonMonotonicPrefix,
  NoPhases,
  ValidationError,
  EmptyPhase,
  InsufficientObservations,
  NonPositiveDrop,
  NoReferenceAnchor,
  // metrics / cli
  LengthMismatch,
  NonPositiveObserved,
  InvalidGroup,
  InvalidArgument,
  IoError,
};

enum class ErrorCategory { Io, Usage, Parse, Data, Numeric };

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::NonPositiveInput: return "NonPositiveInput";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InvalidAlpha: return "InvalidAlpha";
    case Errc::InvalidLevel: return "InvalidLevel";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::MissingFeature: return "MissingFeature";
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::EmptyHistory: return "EmptyHistory";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::NonMonotonicPrefix: return "NonMonotonicPrefix";
    case Errc::NoPhases: return "NoPhases";
    case Errc::ValidationError: return "ValidationError";
    case Errc::EmptyPhase: return "EmptyPhase";
    case Errc::InsufficientObservations: return "InsufficientObservations";
    case Errc::NonPositiveDrop: return "NonPositiveDrop";
    case Errc::NoReferenceAnchor: return "NoReferenceAnchor";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonPositiveObserved: return "NonPositiveObserved";
    case Errc::InvalidGroup: return "InvalidGroup";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

constexpr ErrorCategory errc_category(Errc c) {
  switch (c) {
    case Errc::ParseError:
    case Errc::SchemaVersionMismatch:
      return ErrorCategory::Parse;
    case Errc::RankDeficient:
    case Errc::NonConvergence:
      return ErrorCategory::Numeric;
    case Errc::InvalidAlpha:
    case Errc::InvalidLevel:
    case Errc::InvalidGroup:
    case Errc::InvalidArgument:
      return ErrorCategory::Usage;
    case Errc::IoError:
      return ErrorCategory::Io;
    default:
      return ErrorCategory::Data;
  }
}

/// Process exit status for a category: 1 io, 2 usage, 3 parse, 4 data, 5 numeric.
constexpr int exit_code(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::Io: return 1;
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Parse: return 3;
    case ErrorCategory::Data: return 4;
    case ErrorCategory::Numeric: return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), message_(what) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }
  const std::string& message() const noexcept { return message_; }

  /// Same error with a pipeline stage prefixed to the message.
  Error in_stage(const std::string& stage) const { return Error(code_, "[" + stage + "] " + message_); }

 private:
  Errc code_;
  std::string message_;
};

}  // namespace soh
