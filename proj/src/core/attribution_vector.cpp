#include "selfcon/core/attribution_vector.hpp"

#include <cmath>
#include <string>

#include "selfcon/core/error.hpp"

namespace selfcon {

std::string_view to_string(AttributionMethod method) {
  switch (method) {
    case AttributionMethod::kLime: return "lime";
    case AttributionMethod::kLig: return "lig";
    case AttributionMethod::kExactShapley: return "exact_shapley";
    case AttributionMethod::kKernelShap: return "kshap";
  }
  return "unknown";
}

AttributionMethod parse_attribution_method(std::string_view text) {
  if (text == "lime") return AttributionMethod::kLime;
  if (text == "lig") return AttributionMethod::kLig;
  if (text == "exact_shapley" || text == "shapley") return AttributionMethod::kExactShapley;
  if (text == "kshap") return AttributionMethod::kKernelShap;
  fail(ErrorKind::kInvalidArgument, "unknown attribution method '" + std::string(text) + "'");
}

void AttributionVector::validate() const {
  if (skip_mask.size() != scores.size()) {
    fail(ErrorKind::kInvalidArgument, "AttributionVector: mask/score length mismatch");
  }
  if (!std::isfinite(target_slp)) fail(ErrorKind::kNonFinite, "AttributionVector: non-finite target slp");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      fail(ErrorKind::kNonFinite, "AttributionVector: non-finite score at position " + std::to_string(i));
    }
    if (skip_mask[i] && scores[i] != 0.0) {
      fail(ErrorKind::kInvalidArgument, "AttributionVector: masked position " + std::to_string(i) + " is nonzero");
    }
  }
}

}  // namespace selfcon
