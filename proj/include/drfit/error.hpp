#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace drfit {

/// Failure categories. The CLI maps each one to its own exit code.
enum class ErrorCategory {
  shape = 2,
  input = 3,
  numeric = 4,
  config = 5,
  training = 6,
  parse = 7,
  divergence = 8,
  optimisation = 9,
  io = 10,
};

const char* to_string(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::input, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

/// Non-finite value produced inside the network; carries the layer it came from.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t layer = -1)
      : Error(ErrorCategory::numeric, what), layer_(layer) {}

  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

/// A training run diverged or could not renormalise its weights.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(ErrorCategory::training, what + " (epoch " + std::to_string(epoch) + ")"),
        epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

enum class ParseErrorKind { unknown_magic, truncated, count_mismatch, bad_dimensions, malformed };

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : Error(ErrorCategory::parse, what), kind_(kind) {}

  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

/// A root search found no sign change before its search cap.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorCategory::divergence, what) {}
};

/// An iterative optimiser hit its iteration cap; carries the best point found.
class OptimisationError : public Error {
 public:
  OptimisationError(const std::string& what, std::vector<double> best)
      : Error(ErrorCategory::optimisation, what), best_(std::move(best)) {}

  const std::vector<double>& best() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

}  // namespace drfit
