#include "rbir/errors.h"

namespace rbir {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidRequest:
      return "invalid_request";
    case ErrorCode::kNotFound:
      return "not_found";
    case ErrorCode::kDimensionMismatch:
      return "dimension_mismatch";
    case ErrorCode::kOov:
      return "oov";
    case ErrorCode::kInsufficientData:
      return "insufficient_data";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kInternal:
      return "internal";
  }
  return "internal";
}

void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace rbir
