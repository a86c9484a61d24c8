#pragma once

#include <stdexcept>
#include <string>

namespace selbias {

enum class ErrorKind {
  kInvalidParams,
  kInvalidMixture,
  kOutOfRange,
  kInsufficientAnnotations,
  kBinExhausted,
  kZeroDensity,
  kEmptyDataset,
  kEmptyBucket,
  kDegenerateFit,
  kIllConditioned,
  kQuadratureFailure,
  kInvalidConfig,
  kSchemaViolation,
  kIoError,
  kTruthUnavailable,
  kMissingPrerequisite,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` lets callers map failures
// onto exit codes or structured report entries.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace selbias
