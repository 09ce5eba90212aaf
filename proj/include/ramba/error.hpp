#pragma once

#include <stdexcept>
#include <string>

namespace ramba {

/// Coarse error classes; the CLI maps each to a distinct exit code.
enum class ErrorCategory {
  kInvalidArgument,
  kPrecondition,
  kData,
  kIo,
  kStructural,
  kNumerical,
};

const char* to_string(ErrorCategory category);
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& what) {
  throw Error(category, what);
}

}  // namespace ramba
