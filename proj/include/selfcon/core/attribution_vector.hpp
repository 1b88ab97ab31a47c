#pragma once

#include <string_view>
#include <vector>

namespace selfcon {

enum class AttributionMethod { kLime, kLig, kExactShapley, kKernelShap };

std::string_view to_string(AttributionMethod method);
AttributionMethod parse_attribution_method(std::string_view text);

/// Per-input-token importance scores for one output sequence. Positions
/// flagged in skip_mask carry exactly zero.
struct AttributionVector {
  std::vector<double> scores;
  AttributionMethod method = AttributionMethod::kLime;
  double target_slp = 0.0;
  std::vector<bool> skip_mask;

  std::size_t size() const { return scores.size(); }
  /// Throws kNonFinite / kInvalidArgument when the invariants are broken.
  void validate() const;
};

}  // namespace selfcon
