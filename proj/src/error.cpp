#include "revis/error.hpp"

namespace revis {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SinkFailure: return "SinkFailure";
    case Errc::IoError: return "IoError";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MissingCondition: return "MissingCondition";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::EmptyStateSet: return "EmptyStateSet";
    case Errc::DegenerateVector: return "DegenerateVector";
    case Errc::NoSeparableLayer: return "NoSeparableLayer";
    case Errc::EmptySample: return "EmptySample";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::ZeroDenominator: return "ZeroDenominator";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace revis
