#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dial {

enum class ErrorCode {
  EmptyInput,
  DegenerateChannel,
  ShapeMismatch,
  InsufficientDomainSamples,
  StaleCache,
  MissingFrozenParams,
  BadArchitecture,
  MissingLabel,
  NonFiniteValue,
  NonFiniteGradient,
  BadSpec,
  ParseError,
  InconsistentWidth,
  UnknownDomainTag,
  ConfigError,
  Diverged,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` lets callers
// (tests, CLI exit-code mapping) branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// True for failures that stem from the numbers rather than from the inputs'
// structure. The CLI maps these to exit code 2.
inline bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateChannel:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::Diverged:
      return true;
    default:
      return false;
  }
}

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateChannel: return "DegenerateChannel";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InsufficientDomainSamples: return "InsufficientDomainSamples";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::MissingFrozenParams: return "MissingFrozenParams";
    case ErrorCode::BadArchitecture: return "BadArchitecture";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentWidth: return "InconsistentWidth";
    case ErrorCode::UnknownDomainTag: return "UnknownDomainTag";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dial
