#include "selbias/error.hpp"

namespace selbias {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParams: return "invalid-params";
    case ErrorKind::kInvalidMixture: return "invalid-mixture";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kInsufficientAnnotations: return "insufficient-annotations";
    case ErrorKind::kBinExhausted: return "bin-exhausted";
    case ErrorKind::kZeroDensity: return "zero-density";
    case ErrorKind::kEmptyDataset: return "empty-dataset";
    case ErrorKind::kEmptyBucket: return "empty-bucket";
    case ErrorKind::kDegenerateFit: return "degenerate-fit";
    case ErrorKind::kIllConditioned: return "ill-conditioned-system";
    case ErrorKind::kQuadratureFailure: return "quadrature-failure";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kSchemaViolation: return "schema-violation";
    case ErrorKind::kIoError: return "io-error";
    case ErrorKind::kTruthUnavailable: return "truth-unavailable";
    case ErrorKind::kMissingPrerequisite: return "missing-prerequisite";
  }
  return "unknown";
}

}  // namespace selbias
