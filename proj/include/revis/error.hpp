#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace revis {

enum class Errc {
  // tensorio
  SinkFailure,
  IoError,
  InvariantViolation,
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  ShapeMismatch,
  MalformedHeader,
  // vectors / calibration / steering
  MissingCondition,
  DimensionMismatch,
  ZeroVector,
  EmptyStateSet,
  DegenerateVector,
  NoSeparableLayer,
  EmptySample,
  KOutOfRange,
  InvalidConfig,
  // toy model
  InvalidSpec,
  SequenceTooLong,
  // metrics
  EmptyBatch,
  ZeroDenominator,
  ParseError,
};

std::string_view errc_name(Errc code) noexcept;

/// Single exception type for the toolkit; `code()` names the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace revis
