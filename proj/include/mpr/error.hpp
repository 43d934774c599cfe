#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mpr {

enum class ErrorCode {
  InvalidArgument,
  IoError,
  // dataset
  MissingModality,
  MalformedGnss,
  DecodeError,
  InvalidFix,
  IndexOutOfRange,
  IncompleteGroundTruth,
  // descriptors
  WrongChannelCount,
  EmptyImage,
  InsufficientFeatures,
  DimensionMismatch,
  ParseError,
  InvalidChannel,
  // matching
  ChannelMismatch,
  AllWeightsZero,
  // tuning
  EmptyList,
  InvalidRange,
  // evaluation
  MissingGroundTruth,
  // configuration
  UnknownKey,
  MissingRequired,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable error code. All library failures
/// surface as this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mpr
