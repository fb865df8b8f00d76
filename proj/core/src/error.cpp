#include "gafnet/error.hpp"

namespace gafnet {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInvalidCutoffs: return "invalid-cutoffs";
    case ErrorKind::kUnstableDesign: return "unstable-design";
    case ErrorKind::kTooShort: return "too-short";
    case ErrorKind::kWindowTooLong: return "window-too-long";
    case ErrorKind::kOutOfDomain: return "out-of-domain";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kIndivisible: return "indivisible";
    case ErrorKind::kNonFiniteGradient: return "non-finite-gradient";
    case ErrorKind::kUnknownVariant: return "unknown-variant";
    case ErrorKind::kNonOneHotLabel: return "non-one-hot-label";
    case ErrorKind::kEmptyDataset: return "empty-dataset";
    case ErrorKind::kMalformedRow: return "malformed-row";
    case ErrorKind::kNonNumericField: return "non-numeric-field";
    case ErrorKind::kEmptyFile: return "empty-file";
    case ErrorKind::kUnsupportedFormat: return "unsupported-format";
    case ErrorKind::kMalformedHeader: return "malformed-header";
    case ErrorKind::kTruncatedPayload: return "truncated-payload";
    case ErrorKind::kHeaderMismatch: return "header-mismatch";
    case ErrorKind::kTruncatedStream: return "truncated-stream";
    case ErrorKind::kUnterminatedStream: return "unterminated-stream";
    case ErrorKind::kEmptyResult: return "empty-result";
    case ErrorKind::kLengthMismatch: return "length-mismatch";
    case ErrorKind::kSingleClassLabels: return "single-class-labels";
    case ErrorKind::kIoFailure: return "io-failure";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kBadMagic: return "bad-magic";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace gafnet
