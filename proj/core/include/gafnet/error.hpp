#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gafnet {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidCutoffs,
  kUnstableDesign,
  kTooShort,
  kWindowTooLong,
  kOutOfDomain,
  kShapeMismatch,
  kIndivisible,
  kNonFiniteGradient,
  kUnknownVariant,
  kNonOneHotLabel,
  kEmptyDataset,
  kMalformedRow,
  kNonNumericField,
  kEmptyFile,
  kUnsupportedFormat,
  kMalformedHeader,
  kTruncatedPayload,
  kHeaderMismatch,
  kTruncatedStream,
  kUnterminatedStream,
  kEmptyResult,
  kLengthMismatch,
  kSingleClassLabels,
  kIoFailure,
  kVersionMismatch,
  kBadMagic,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gafnet
