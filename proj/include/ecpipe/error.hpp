#pragma once

#include <stdexcept>
#include <string>

namespace ecpipe {

enum class ErrorCode {
  invalid_argument,
  length_mismatch,
  singular_matrix,
  not_found,
  duplicate,
  unrecoverable,
  insufficient_helpers,
  transport,
  timeout,
  corrupt_frame,
  io,
  protocol,
  session_aborted,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& what);

}  // namespace ecpipe
