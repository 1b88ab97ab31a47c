#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "selfcon/core/attribution_vector.hpp"

namespace selfcon::alignment {

enum class Metric { kCcCos, kCcSp };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

struct AlignmentScore {
  Metric metric = Metric::kCcSp;
  double value = 0.0;  // in [-1, 1]; 0 when degenerate
  std::size_t effective_m = 0;
  bool degenerate = false;
};

/// Cosine over jointly unmasked positions.
AlignmentScore cc_cos(const AttributionVector& dec, const AttributionVector& exp);
/// Spearman correlation with average ranks for ties (Pearson of the ranks).
AlignmentScore cc_sp(const AttributionVector& dec, const AttributionVector& exp);
AlignmentScore align(Metric metric, const AttributionVector& dec, const AttributionVector& exp);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);
/// 1 - 6 sum d^2 / (m (m^2 - 1)); valid only without ties.
double spearman_no_ties(std::span<const double> a, std::span<const double> b);

struct ExplanationRanking {
  std::vector<AlignmentScore> scores;
  std::size_t best = 0;   // highest value, lowest index on ties
  std::size_t worst = 0;  // lowest value, lowest index on ties
  std::size_t degenerate_count = 0;
};

ExplanationRanking score_explanations(const AttributionVector& dec, std::span<const AttributionVector> exps,
                                      Metric metric);

}  // namespace selfcon::alignment
