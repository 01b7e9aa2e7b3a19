#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cenergy {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  Schema,
  NotFound,
  InvalidKey,
  BadRequest,
  Upstream,
  Timeout,
  TooLarge,
  FixtureMissing,
};

inline std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::InvalidKey: return "invalid key";
    case ErrorKind::BadRequest: return "bad request";
    case ErrorKind::Upstream: return "upstream error";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::TooLarge: return "too large";
    case ErrorKind::FixtureMissing: return "fixture missing";
  }
  return "error";
}

/// Every failure in the library surfaces as this exception. `stage` is empty
/// until the pipeline attaches the name of the step that failed.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string message, std::string stage = {})
      : std::runtime_error(message), kind_(kind), stage_(std::move(stage)), message_(std::move(message))
  {
  }

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }
  const std::string& message() const noexcept { return message_; }

  Error with_stage(std::string stage) const { return Error(kind_, message_, std::move(stage)); }

private:
  ErrorKind kind_;
  std::string stage_;
  std::string message_;
};

}  // namespace cenergy
