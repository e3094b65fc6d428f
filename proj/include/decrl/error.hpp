#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace decrl {

enum class ErrorKind {
  parse,
  vocabulary,
  range,
  shape,
  config,
  degenerate_input,
  spec,
  data,
  io,
  divergence,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::vocabulary: return "vocabulary";
    case ErrorKind::range: return "range";
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
    case ErrorKind::degenerate_input: return "degenerate_input";
    case ErrorKind::spec: return "spec";
    case ErrorKind::data: return "data";
    case ErrorKind::io: return "io";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can report a
// machine-parsable line and callers can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace decrl
