#include <cmath>

#include "common.hpp"

namespace selfcon::attribution {

std::vector<TokenId> AttributionRequest::full_prompt() const {
  std::vector<TokenId> p(input.tokens().begin(), input.tokens().end());
  p.insert(p.end(), context.begin(), context.end());
  return p;
}

std::vector<std::size_t> AttributionRequest::perturbable() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!input.skip_mask()[i]) out.push_back(i);
  }
  return out;
}

QuadratureRule quadrature_rule(Quadrature kind, int steps) {
  if (steps < 1) fail(ErrorKind::kInvalidArgument, "quadrature needs at least one step");
  QuadratureRule rule;
  if (kind == Quadrature::kRiemannLeft) {
    for (int j = 0; j < steps; ++j) {
      rule.nodes.push_back(static_cast<double>(j) / steps);
      rule.weights.push_back(1.0 / steps);
    }
  } else if (steps == 1) {
    rule.nodes = {0.5};
    rule.weights = {1.0};
  } else {
    const double h = 1.0 / (steps - 1);
    for (int j = 0; j < steps; ++j) {
      rule.nodes.push_back(j * h);
      rule.weights.push_back((j == 0 || j == steps - 1) ? 0.5 * h : h);
    }
  }
  return rule;
}

double CompletenessCheck::relative_error() const {
  const double delta = slp_input - slp_baseline;
  const double denom = std::max(std::abs(delta), 1e-12);
  return std::abs(score_sum - delta) / denom;
}

}  // namespace selfcon::attribution
