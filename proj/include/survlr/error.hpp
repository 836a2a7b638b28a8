#pragma once

#include <stdexcept>
#include <string>

namespace survlr {

enum class ErrorKind {
  InvalidInput,
  InvalidSpec,
  InvalidPlan,
  NoEvents,
  SingularVariance,
  UndefinedMetric,
  UnsupportedK,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidSpec: return "invalid spec";
    case ErrorKind::InvalidPlan: return "invalid plan";
    case ErrorKind::NoEvents: return "no events";
    case ErrorKind::SingularVariance: return "singular variance";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::UnsupportedK: return "unsupported k";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

/// Single exception type for the library; `kind()` lets callers (the CLI in
/// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace detail
}  // namespace survlr
