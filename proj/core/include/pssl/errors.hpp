#pragma once

#include <stdexcept>
#include <string>

namespace pssl {

// Error categories map one-to-one onto the CLI exit codes:
// config -> 2, data -> 3, numerics -> 4.
enum class ErrorCategory { config, data, numerics };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& what_arg)
      : std::runtime_error(what_arg), category_(cat) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Bad or contradictory run configuration (unknown key, out-of-range value,
// invalid filter band, non-positive temperature).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorCategory::config, msg) {}
};

// Filter design rejected the requested band (cutoffs must satisfy
// 0 < low < high < fs / 2).
class FilterDesignError : public ConfigError {
 public:
  explicit FilterDesignError(const std::string& msg) : ConfigError(msg) {}
};

// Malformed or insufficient input data (unreadable CSV, truncated stream,
// wrong column count).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};

// A segmented span fell outside the physiologic length bounds.
class SegmentTooShort : public DataError {
 public:
  explicit SegmentTooShort(const std::string& msg) : DataError(msg) {}
};

// A pulse had (numerically) zero variance, so it cannot be z-normalized
// and its shape statistics are undefined.
class DegeneratePulse : public DataError {
 public:
  explicit DegeneratePulse(const std::string& msg) : DataError(msg) {}
};

// A signal group offered fewer pulses than the annotator needs to form
// per-signal statistic bands.
class AnnotationError : public DataError {
 public:
  explicit AnnotationError(const std::string& msg) : DataError(msg) {}
};

// Oversampling preconditions violated (fewer than two minority samples).
class ImbalanceError : public DataError {
 public:
  explicit ImbalanceError(const std::string& msg) : DataError(msg) {}
};

// Mask span does not fit into the row it should be applied to.
class MaskError : public DataError {
 public:
  explicit MaskError(const std::string& msg) : DataError(msg) {}
};

// Operands with incompatible shapes reached a tensor op.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(ErrorCategory::numerics, msg) {}
};

// A non-finite value (NaN or Inf) was produced.
class NumericsError : public Error {
 public:
  explicit NumericsError(const std::string& msg) : Error(ErrorCategory::numerics, msg) {}
};

// An API precondition other than shape was violated (e.g. inputs that the
// caller promised to L2-normalize were not).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(ErrorCategory::numerics, msg) {}
};

inline int exit_code_for(ErrorCategory cat) noexcept {
  switch (cat) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numerics: return 4;
  }
  return 4;
}

}  // namespace pssl
