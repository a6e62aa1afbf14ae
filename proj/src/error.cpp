#include "drfit/error.hpp"

namespace drfit {

const char* to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::input: return "input";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::config: return "config";
    case ErrorCategory::training: return "training";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::optimisation: return "optimisation";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

}  // namespace drfit
