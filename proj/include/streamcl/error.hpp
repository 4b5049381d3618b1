#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace streamcl {

using ClassId = std::int32_t;

enum class ErrorCode {
  invalid_argument,
  io,
  format,
  config,
  state,
};

// All library failures surface as this exception; the C layer maps the code
// onto streamcl_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace streamcl
