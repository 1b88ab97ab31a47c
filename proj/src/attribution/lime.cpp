#include <Eigen/Dense>
#include <cmath>

#include "common.hpp"

namespace selfcon::attribution {
namespace {

std::vector<std::vector<bool>> draw_masks(std::size_t p, const LimeParams& params, Rng& rng) {
  std::vector<std::vector<bool>> masks;
  if (params.exhaustive) {
    if (p > 16) fail(ErrorKind::kInvalidArgument, "lime: exhaustive enumeration limited to 16 features");
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << p); ++bits) {
      std::vector<bool> m(p);
      for (std::size_t j = 0; j < p; ++j) m[j] = (bits >> j) & 1u;
      masks.push_back(std::move(m));
    }
    return masks;
  }
  std::vector<std::size_t> order(p);
  for (int s = 0; s < params.n_samples; ++s) {
    std::vector<bool> m(p, true);
    if (params.mask == MaskDistribution::kBernoulli) {
      for (std::size_t j = 0; j < p; ++j) m[j] = rng.uniform() >= 0.5;
    } else {
      const std::size_t removed = rng.below(p + 1);
      for (std::size_t j = 0; j < p; ++j) order[j] = j;
      for (std::size_t j = 0; j < removed; ++j) {
        const std::size_t pick = j + rng.below(p - j);
        std::swap(order[j], order[pick]);
        m[order[j]] = false;
      }
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

// Cosine distance to the all-ones mask; the empty mask is taken as distance 1.
double distance_to_full(const std::vector<bool>& m) {
  std::size_t on = 0;
  for (bool b : m) on += b;
  if (on == 0) return 1.0;
  return 1.0 - std::sqrt(static_cast<double>(on) / m.size());
}

}  // namespace

AttributionVector attribute_lime(const oracle::Oracle& oracle, const AttributionRequest& req,
                                 const LimeParams& params, Rng& rng) {
  const auto caps = oracle.capabilities();
  oracle::require(caps.can_logprob, "can_logprob", oracle);
  const auto prompt = req.full_prompt();
  const double target = oracle.logprob(prompt, req.continuation).slp;
  if (!std::isfinite(target)) fail(ErrorKind::kNonFinite, "lime: non-finite target slp");

  const auto positions = req.perturbable();
  const std::size_t p = positions.size();
  auto out = detail::empty_vector(req, AttributionMethod::kLime, target);
  if (p == 0) return out;
  if (!params.exhaustive && params.n_samples < static_cast<int>(p) + 2) {
    fail(ErrorKind::kInvalidArgument, "lime: n_samples must be at least feature count + 2");
  }
  if (!(params.kernel_width > 0.0) || params.ridge < 0.0) {
    fail(ErrorKind::kInvalidArgument, "lime: kernel width must be > 0 and ridge >= 0");
  }
  const TokenId baseline = params.baseline.value_or(caps.pad_id);

  const auto masks = draw_masks(p, params, rng);
  bool varied = false;
  for (const auto& m : masks) varied = varied || m != masks.front();
  if (!varied) fail(ErrorKind::kDegenerate, "lime: all perturbation masks are identical");

  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(masks.size());
  for (const auto& m : masks) prompts.push_back(detail::masked_prompt(req, positions, m, baseline));
  const auto slps = oracle.slp_batch(prompts, req.continuation);
  detail::check_finite(slps, "lime");

  // Weighted ridge with an unpenalized intercept (last column).
  const Eigen::Index n = static_cast<Eigen::Index>(masks.size());
  const Eigen::Index k = static_cast<Eigen::Index>(p) + 1;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) x(r, static_cast<Eigen::Index>(j)) = masks[r][j] ? 1.0 : 0.0;
    x(r, k - 1) = 1.0;
    y(r) = slps[r];
    const double d = distance_to_full(masks[r]);
    w(r) = std::exp(-d * d / (params.kernel_width * params.kernel_width));
  }
  Eigen::MatrixXd gram = x.transpose() * w.asDiagonal() * x;
  for (Eigen::Index j = 0; j + 1 < k; ++j) gram(j, j) += params.ridge;
  const Eigen::VectorXd rhs = x.transpose() * (w.asDiagonal() * y);
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) fail(ErrorKind::kDegenerate, "lime: regression is singular");
  const Eigen::VectorXd beta = solver.solve(rhs);
  for (std::size_t j = 0; j < p; ++j) out.scores[positions[j]] = beta(static_cast<Eigen::Index>(j));
  out.validate();
  return out;
}

}  // namespace selfcon::attribution
