#include "selfcon/alignment/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "selfcon/core/error.hpp"

namespace selfcon::alignment {
namespace {

struct Restricted {
  std::vector<double> a, b;
};

Restricted restrict_unmasked(const AttributionVector& dec, const AttributionVector& exp) {
  if (dec.scores.size() != exp.scores.size()) {
    fail(ErrorKind::kMismatch, "alignment: vector lengths differ (" + std::to_string(dec.scores.size()) + " vs " +
                                   std::to_string(exp.scores.size()) + ")");
  }
  if (dec.skip_mask != exp.skip_mask) fail(ErrorKind::kMismatch, "alignment: skip masks differ");
  Restricted r;
  for (std::size_t i = 0; i < dec.scores.size(); ++i) {
    if (dec.skip_mask[i]) continue;
    r.a.push_back(dec.scores[i]);
    r.b.push_back(exp.scores[i]);
  }
  return r;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

std::string_view to_string(Metric metric) { return metric == Metric::kCcCos ? "cc_cos" : "cc_sp"; }

Metric parse_metric(std::string_view text) {
  if (text == "cc_cos" || text == "cos") return Metric::kCcCos;
  if (text == "cc_sp" || text == "sp") return Metric::kCcSp;
  fail(ErrorKind::kInvalidArgument, "unknown alignment metric '" + std::string(text) + "'");
}

AlignmentScore cc_cos(const AttributionVector& dec, const AttributionVector& exp) {
  const auto r = restrict_unmasked(dec, exp);
  AlignmentScore s{Metric::kCcCos, 0.0, r.a.size(), false};
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < r.a.size(); ++i) {
    dot += r.a[i] * r.b[i];
    na += r.a[i] * r.a[i];
    nb += r.b[i] * r.b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    s.degenerate = true;
    return s;
  }
  s.value = clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb)));
  return s;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_no_ties(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double m = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (m * (m * m - 1.0));
}

AlignmentScore cc_sp(const AttributionVector& dec, const AttributionVector& exp) {
  const auto r = restrict_unmasked(dec, exp);
  if (r.a.size() < 2) {
    fail(ErrorKind::kInvalidArgument, "cc_sp: needs at least two unmasked positions, got " + std::to_string(r.a.size()));
  }
  AlignmentScore s{Metric::kCcSp, 0.0, r.a.size(), false};
  const auto ra = average_ranks(r.a);
  const auto rb = average_ranks(r.b);
  const double mean = 0.5 * static_cast<double>(r.a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double x = ra[i] - mean, y = rb[i] - mean;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa == 0.0 || sbb == 0.0) {
    s.degenerate = true;
    return s;
  }
  s.value = clamp_unit(sab / std::sqrt(saa * sbb));
  return s;
}

AlignmentScore align(Metric metric, const AttributionVector& dec, const AttributionVector& exp) {
  return metric == Metric::kCcCos ? cc_cos(dec, exp) : cc_sp(dec, exp);
}

ExplanationRanking score_explanations(const AttributionVector& dec, std::span<const AttributionVector> exps,
                                      Metric metric) {
  if (exps.empty()) fail(ErrorKind::kInvalidArgument, "score_explanations: no explanations");
  ExplanationRanking out;
  for (const auto& e : exps) {
    out.scores.push_back(align(metric, dec, e));
    out.degenerate_count += out.scores.back().degenerate;
  }
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    if (out.scores[i].value > out.scores[out.best].value) out.best = i;
    if (out.scores[i].value < out.scores[out.worst].value) out.worst = i;
  }
  return out;
}

}  // namespace selfcon::alignment
