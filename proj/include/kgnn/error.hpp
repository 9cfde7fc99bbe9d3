#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgnn {

/// Base of every error thrown by the library. `kind()` is a stable tag used by
/// the CLI to choose an exit code and by tests to check error categories.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define KGNN_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

KGNN_DEFINE_ERROR(DimensionError, "dimension")
KGNN_DEFINE_ERROR(DegenerateVectorError, "degenerate_vector")
KGNN_DEFINE_ERROR(ContractError, "contract")
KGNN_DEFINE_ERROR(LookupError, "lookup")
KGNN_DEFINE_ERROR(ConfigError, "config")
KGNN_DEFINE_ERROR(MappingError, "mapping")
KGNN_DEFINE_ERROR(SamplingError, "sampling")
KGNN_DEFINE_ERROR(FormatError, "format")
KGNN_DEFINE_ERROR(NumericalError, "numerical")

#undef KGNN_DEFINE_ERROR

/// Malformed text input. Carries the 1-based line (and column, 0 if unknown).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : Error("parse", "line " + std::to_string(line) +
                           (column ? ", column " + std::to_string(column) : std::string{}) +
                           ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace kgnn
