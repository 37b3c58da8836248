#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mrb {

enum class ErrorKind {
  kConfiguration,
  kIncompleteEvaluation,
  kDegenerateDenominator,
  kMetricUndefined,
  kNumeric,
  kTraining,
  kSchema,
  kUsage,
  kIo,
  kAttack,
};

std::string_view to_string(ErrorKind kind);

// Base exception for everything raised by the library. `path` carries a
// JSON-pointer style location for schema errors and is empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string path = {})
      : std::runtime_error(message), kind_(kind), path_(std::move(path)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ErrorKind kind_;
  std::string path_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kIncompleteEvaluation: return "incomplete_evaluation";
    case ErrorKind::kDegenerateDenominator: return "degenerate_denominator";
    case ErrorKind::kMetricUndefined: return "metric_undefined";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kAttack: return "attack";
  }
  return "unknown";
}

}  // namespace mrb
