#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "selfcon/attribution/attribution.hpp"
#include "selfcon/core/error.hpp"

namespace selfcon::attribution::detail {

inline AttributionVector empty_vector(const AttributionRequest& req, AttributionMethod method, double target) {
  AttributionVector v;
  v.scores.assign(req.input.size(), 0.0);
  v.method = method;
  v.target_slp = target;
  v.skip_mask = req.input.skip_mask();
  return v;
}

inline void check_finite(const std::vector<double>& values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::kNonFinite, std::string(what) + ": non-finite slp at query " + std::to_string(i));
    }
  }
}

/// Prompts where the perturbable positions with present[j] == false are
/// replaced by the baseline token.
inline std::vector<TokenId> masked_prompt(const AttributionRequest& req, const std::vector<std::size_t>& positions,
                                          const std::vector<bool>& present, TokenId baseline) {
  std::vector<TokenId> p = req.full_prompt();
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (!present[j]) p[positions[j]] = baseline;
  }
  return p;
}

}  // namespace selfcon::attribution::detail
