#ifndef RBIR_ERRORS_H_
#define RBIR_ERRORS_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbir {

// Error categories shared by the library, the CLI and the HTTP service.
enum class ErrorCode {
  kInvalidRequest,
  kNotFound,
  kDimensionMismatch,
  kOov,
  kInsufficientData,
  kIo,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

}  // namespace rbir

#endif  // RBIR_ERRORS_H_
