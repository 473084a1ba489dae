#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgce {

enum class ErrorKind {
  // image / data
  MalformedImage,
  UnsupportedDepth,
  UnsupportedChannels,
  ChannelMismatch,
  InvalidThreshold,
  InvalidSize,
  OutOfBounds,
  EmptyFont,
  UnreadableFile,
  DataEmpty,
  MalformedContainer,
  // configuration / shapes
  InvalidSpec,
  InvalidConfig,
  ShapeMismatch,
  DimensionMismatch,
  ImageTooSmall,
  // numerics
  DegenerateBatch,
  NonFiniteLoss,
  NumericalFailure,
};

std::string_view to_string(ErrorKind kind);

/// Exception type thrown by every module; `kind()` lets callers map failures
/// to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures caused by the numbers rather than the inputs.
  bool is_numerical() const noexcept {
    return kind_ == ErrorKind::NonFiniteLoss || kind_ == ErrorKind::NumericalFailure ||
           kind_ == ErrorKind::DegenerateBatch;
  }

 private:
  ErrorKind kind_;
};

}  // namespace sgce
