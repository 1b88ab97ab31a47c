#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace selfcon {

enum class ErrorKind {
  kInvalidArgument,
  kContextOverflow,
  kCapabilityMissing,
  kTransport,
  kProtocol,
  kDegenerate,
  kNonFinite,
  kRefused,
  kParse,
  kIo,
  kValidation,
  kDivergence,
  kMismatch,
};

std::string_view to_string(ErrorKind kind);
/// Inverse of to_string; unknown names map to kRefused.
ErrorKind error_kind_from_string(std::string_view name);

// Every engine failure carries a kind so callers can tell transport
// problems from model or configuration problems.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace selfcon
