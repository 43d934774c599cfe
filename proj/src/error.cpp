#include "mpr/error.hpp"

namespace mpr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingModality: return "MissingModality";
    case ErrorCode::MalformedGnss: return "MalformedGnss";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::InvalidFix: return "InvalidFix";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::IncompleteGroundTruth: return "IncompleteGroundTruth";
    case ErrorCode::WrongChannelCount: return "WrongChannelCount";
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::InsufficientFeatures: return "InsufficientFeatures";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidChannel: return "InvalidChannel";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::AllWeightsZero: return "AllWeightsZero";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingRequired: return "MissingRequired";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace mpr
