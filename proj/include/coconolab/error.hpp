#pragma once

#include <stdexcept>
#include <string>

namespace coconolab {

// Numeric values are mirrored by coconolab_status in coconolab.h.
enum class ErrorCode : int {
  invalid_argument = 1,
  shape_mismatch = 2,
  degenerate_input = 3,
  convergence_failure = 4,
  io_error = 5,
  bad_magic = 6,
  unsupported_version = 7,
  truncated = 8,
  duplicate_name = 9,
  malformed = 10,
  producer_failure = 11,
  non_finite = 12,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace coconolab
