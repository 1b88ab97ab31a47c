#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "selfcon/core/attribution_vector.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/core/token_sequence.hpp"
#include "selfcon/oracle/oracle.hpp"

namespace selfcon::attribution {

/// Attribution of `continuation` to the tokens of `input`. The model sees
/// input + context; context tokens are never perturbed and get no score.
/// Skip-flagged input positions are held fixed and score exactly 0.
struct AttributionRequest {
  TokenSequence input;
  std::vector<TokenId> context;
  std::vector<TokenId> continuation;

  std::vector<TokenId> full_prompt() const;
  /// Indices of unmasked input positions.
  std::vector<std::size_t> perturbable() const;
};

enum class MaskDistribution {
  kUniformCount,  // removal count uniform in 0..p, then a uniform subset of that size
  kBernoulli,     // each position removed independently with probability 1/2
};

struct LimeParams {
  int n_samples = 500;
  std::optional<TokenId> baseline;  // defaults to the oracle's pad id
  double kernel_width = 0.25;
  double ridge = 1e-3;
  MaskDistribution mask = MaskDistribution::kUniformCount;
  bool exhaustive = false;  // all 2^p masks instead of sampling (p <= 16)
};

enum class LigBaseline { kPadEmbedding, kZeroEmbedding };
enum class Quadrature { kRiemannLeft, kTrapezoid };

struct LigParams {
  int steps = 25;
  LigBaseline baseline = LigBaseline::kPadEmbedding;
  Quadrature quadrature = Quadrature::kTrapezoid;
};

struct KshapParams {
  int n_samples = 2000;
  std::optional<TokenId> baseline;
  bool exhaustive = false;  // all proper coalitions (p <= 16)
};

inline constexpr int kMaxExactShapleyPlayers = 12;

AttributionVector attribute_lime(const oracle::Oracle& oracle, const AttributionRequest& req,
                                 const LimeParams& params, Rng& rng);

AttributionVector attribute_lig(const oracle::Oracle& oracle, const AttributionRequest& req,
                                const LigParams& params);

AttributionVector attribute_exact_shapley(const oracle::Oracle& oracle, const AttributionRequest& req,
                                          std::optional<TokenId> baseline = std::nullopt);

AttributionVector attribute_kshap(const oracle::Oracle& oracle, const AttributionRequest& req,
                                  const KshapParams& params, Rng& rng);

/// Quadrature nodes and weights on [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule quadrature_rule(Quadrature kind, int steps);

/// Sum of LIG scores against SLP(x) - SLP(baseline), for completeness checks.
struct CompletenessCheck {
  double score_sum = 0.0;
  double slp_input = 0.0;
  double slp_baseline = 0.0;
  double relative_error() const;
};
CompletenessCheck lig_completeness(const oracle::Oracle& oracle, const AttributionRequest& req,
                                   const LigParams& params, const AttributionVector& scores);

}  // namespace selfcon::attribution
