#include "coconolab/error.hpp"

namespace coconolab {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::convergence_failure: return "convergence_failure";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::producer_failure: return "producer_failure";
    case ErrorCode::non_finite: return "non_finite";
  }
  return "unknown";
}

}  // namespace coconolab
