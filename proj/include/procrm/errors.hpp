#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace procrm {

enum class ErrorCode {
  invalid_configuration,
  validation,
  numerical,
  trial_complete,
  not_ready,
  conflict,
  state,
  not_found,
  integrity,
};

std::string_view to_string(ErrorCode code);

// Every engine failure surfaces as an Error carrying exactly one code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& message, long first_bad_seq)
      : Error(ErrorCode::integrity, message), first_bad_seq_(first_bad_seq) {}

  // Sequence number of the first event whose replay diverges from the file.
  long first_bad_seq() const noexcept { return first_bad_seq_; }

 private:
  long first_bad_seq_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace procrm
