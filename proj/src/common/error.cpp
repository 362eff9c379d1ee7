#include "concept_canvas/common/error.hpp"

namespace canvas {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kUnprocessable: return "unprocessable";
    case ErrorKind::kUnauthorized: return "unauthorized";
    case ErrorKind::kDataError: return "data_error";
    case ErrorKind::kNumerical: return "numerical_error";
    case ErrorKind::kInternal: return "internal";
  }
  return "internal";
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return 400;
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kUnprocessable: return 422;
    case ErrorKind::kUnauthorized: return 401;
    case ErrorKind::kDataError: return 400;
    case ErrorKind::kNumerical: return 500;
    case ErrorKind::kInternal: return 500;
  }
  return 500;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumerical:
    case ErrorKind::kInternal:
      return 2;
    default:
      return 1;
  }
}

}  // namespace canvas
