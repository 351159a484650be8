#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spde {

// Categories double as the machine-parseable prefix printed by the CLI.
enum class ErrorCategory {
  InvalidArgument,
  Config,
  Io,
  Format,
  Incompatible,
  Numerical,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "invalid_argument";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::Incompatible: return "incompatible";
    case ErrorCategory::Numerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool cond, const std::string& msg,
                    ErrorCategory c = ErrorCategory::InvalidArgument) {
  if (!cond) fail(c, msg);
}

}  // namespace spde
