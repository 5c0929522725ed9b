#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace falldef {

enum class ErrorKind {
  InvalidArgument,   // bad configuration or flag value
  DimensionMismatch, // operand shapes disagree
  Parse,             // malformed input text
  Shape,             // file content violates a shape invariant
  Version,           // unsupported format version
  EmptyInput,
  ClassMissing,
  Divergence,        // non-finite loss or gradient
  Io,
  Network,
};

std::string_view to_string(ErrorKind kind);

/// Base of every error thrown by the library. `field` names the offending
/// item (a flag, a JSON field, a parameter) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace falldef
