#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace canvas {

// Error categories shared by the library, the HTTP service and the CLI.
// Each kind maps onto one HTTP status and one process exit code.
enum class ErrorKind {
  kInvalidArgument,  // malformed input, bad config, wrong stage for a command
  kNotFound,
  kConflict,         // duplicate id, gate already resolved, run busy
  kUnprocessable,    // selection arity violation
  kUnauthorized,
  kDataError,        // unreadable or malformed on-disk data
  kNumerical,        // non-finite loss during optimization
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(std::move(message)), kind_(kind), details_(std::move(details)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorKind kind_;
  nlohmann::json details_;
};

std::string_view to_string(ErrorKind kind);
int http_status(ErrorKind kind);
int exit_code(ErrorKind kind);

[[noreturn]] inline void fail(ErrorKind kind, std::string message,
                              nlohmann::json details = nlohmann::json::object()) {
  throw Error(kind, std::move(message), std::move(details));
}

}  // namespace canvas
