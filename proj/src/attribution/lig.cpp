#include <cmath>

#include "common.hpp"

namespace selfcon::attribution {
namespace {

constexpr std::size_t kGradientChunk = 32;

struct Path {
  std::vector<double> input;     // [prompt rows x width]
  std::vector<double> baseline;  // same shape; context and skipped rows equal input
};

Path embedding_path(const oracle::Oracle& oracle, const AttributionRequest& req, LigBaseline mode) {
  const auto caps = oracle.capabilities();
  const auto prompt = req.full_prompt();
  const std::size_t width = static_cast<std::size_t>(oracle.embedding_width());
  Path path;
  path.input = oracle.embed(prompt);
  path.baseline = path.input;
  std::vector<double> base_row(width, 0.0);
  if (mode == LigBaseline::kPadEmbedding) {
    const TokenId pad = caps.pad_id;
    base_row = oracle.embed(std::span<const TokenId>(&pad, 1));
  }
  for (std::size_t i : req.perturbable()) {
    std::copy(base_row.begin(), base_row.end(), path.baseline.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return path;
}

}  // namespace

AttributionVector attribute_lig(const oracle::Oracle& oracle, const AttributionRequest& req,
                                const LigParams& params) {
  const auto caps = oracle.capabilities();
  oracle::require(caps.can_gradient, "can_gradient", oracle);
  oracle::require(caps.can_embed, "can_embed", oracle);
  const auto rule = quadrature_rule(params.quadrature, params.steps);
  const auto prompt = req.full_prompt();
  const double target = oracle.logprob(prompt, req.continuation).slp;
  if (!std::isfinite(target)) fail(ErrorKind::kNonFinite, "lig: non-finite target slp");

  auto out = detail::empty_vector(req, AttributionMethod::kLig, target);
  const auto positions = req.perturbable();
  if (positions.empty()) return out;

  const std::size_t width = static_cast<std::size_t>(oracle.embedding_width());
  const Path path = embedding_path(oracle, req, params.baseline);
  const std::size_t total = path.input.size();

  // Weighted sum of gradients along the straight path.
  std::vector<double> integrated(total, 0.0);
  for (std::size_t begin = 0; begin < rule.nodes.size(); begin += kGradientChunk) {
    const std::size_t end = std::min(rule.nodes.size(), begin + kGradientChunk);
    std::vector<std::vector<double>> points;
    for (std::size_t j = begin; j < end; ++j) {
      std::vector<double> e(total);
      for (std::size_t t = 0; t < total; ++t) {
        e[t] = path.baseline[t] + rule.nodes[j] * (path.input[t] - path.baseline[t]);
      }
      points.push_back(std::move(e));
    }
    const auto grads = oracle.slp_gradients(prompt, req.continuation, points);
    for (std::size_t j = begin; j < end; ++j) {
      const auto& g = grads[j - begin].grad;
      const double wj = rule.weights[j];
      for (std::size_t t = 0; t < total; ++t) integrated[t] += wj * g[t];
    }
  }
  for (std::size_t i : positions) {
    double s = 0.0;
    for (std::size_t d = 0; d < width; ++d) {
      const std::size_t t = i * width + d;
      s += (path.input[t] - path.baseline[t]) * integrated[t];
    }
    out.scores[i] = s;
  }
  out.validate();
  return out;
}

CompletenessCheck lig_completeness(const oracle::Oracle& oracle, const AttributionRequest& req,
                                   const LigParams& params, const AttributionVector& scores) {
  const Path path = embedding_path(oracle, req, params.baseline);
  const auto prompt = req.full_prompt();
  const std::vector<std::vector<double>> ends = {path.baseline};
  CompletenessCheck check;
  check.slp_baseline = oracle.slp_gradients(prompt, req.continuation, ends).front().slp;
  check.slp_input = oracle.logprob(prompt, req.continuation).slp;
  for (double s : scores.scores) check.score_sum += s;
  return check;
}

}  // namespace selfcon::attribution
