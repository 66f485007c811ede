#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msegnn {

// Root of every error raised by the library. `kind()` is a stable short tag
// used by the CLI and the Python bindings.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MSEGNN_DEFINE_ERROR(Name, tag)                              \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(tag, what) {}    \
  }

MSEGNN_DEFINE_ERROR(DimensionError, "dimension");
MSEGNN_DEFINE_ERROR(DomainError, "domain");
MSEGNN_DEFINE_ERROR(RankError, "rank");
MSEGNN_DEFINE_ERROR(TapeError, "tape");
MSEGNN_DEFINE_ERROR(EmptyReductionError, "empty-reduction");
MSEGNN_DEFINE_ERROR(ConfigError, "config");
MSEGNN_DEFINE_ERROR(ValidationError, "validation");
MSEGNN_DEFINE_ERROR(SamplingError, "sampling");
MSEGNN_DEFINE_ERROR(TaskError, "task");
MSEGNN_DEFINE_ERROR(LabelError, "label");
MSEGNN_DEFINE_ERROR(InputError, "input");
MSEGNN_DEFINE_ERROR(UndefinedMetricError, "undefined-metric");
MSEGNN_DEFINE_ERROR(DegenerateBatchError, "degenerate-batch");
MSEGNN_DEFINE_ERROR(IoError, "io");

#undef MSEGNN_DEFINE_ERROR

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("parse", "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A loss or gradient became non-finite.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

// Divergence during fast-parameter adaptation; `step` is the local step index.
class AdaptationError : public NumericError {
 public:
  AdaptationError(std::size_t step, const std::string& what)
      : NumericError("local step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace msegnn
