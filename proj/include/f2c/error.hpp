#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace f2c {

enum class ErrorCode {
  kInvalidArgument = 1,
  kParse,
  kTooShort,
  kConfig,
  kIo,
  kFormat,
  kContract,
  kNumeric,
  kInternal,
};

/// Short stable identifier, e.g. "E_PARSE". Used in CLI error lines.
std::string_view error_code_name(ErrorCode code) noexcept;

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
  if (!condition) throw Error(ErrorCode::kContract, message);
}

}  // namespace f2c
