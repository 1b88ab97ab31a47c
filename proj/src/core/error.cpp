#include "selfcon/core/error.hpp"

namespace selfcon {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kContextOverflow: return "context_overflow";
    case ErrorKind::kCapabilityMissing: return "capability_missing";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "bad_request";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kRefused: return "refused";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kMismatch: return "mismatch";
  }
  return "unknown";
}

ErrorKind error_kind_from_string(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(ErrorKind::kMismatch); ++k) {
    const auto kind = static_cast<ErrorKind>(k);
    if (to_string(kind) == name) return kind;
  }
  return ErrorKind::kRefused;
}

}  // namespace selfcon
