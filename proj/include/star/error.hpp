#pragma once

#include <stdexcept>
#include <string>

namespace star {

enum class ErrorCode {
  invalid_argument = 1,
  io = 2,
  parse = 3,
  numeric = 4,
  state = 5,
};

// Every failure raised by the core library. The C API maps `code()` onto
// its status enum and keeps `what()` as the last-error message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::invalid_argument, message);
}

}  // namespace star
