#include <Eigen/Dense>
#include <bit>
#include <cmath>

#include "common.hpp"

namespace selfcon::attribution {
namespace {

std::vector<bool> coalition_mask(std::uint64_t bits, std::size_t p) {
  std::vector<bool> m(p);
  for (std::size_t j = 0; j < p; ++j) m[j] = (bits >> j) & 1u;
  return m;
}

double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

AttributionVector attribute_exact_shapley(const oracle::Oracle& oracle, const AttributionRequest& req,
                                          std::optional<TokenId> baseline) {
  const auto caps = oracle.capabilities();
  oracle::require(caps.can_logprob, "can_logprob", oracle);
  const auto positions = req.perturbable();
  const std::size_t p = positions.size();
  if (p > static_cast<std::size_t>(kMaxExactShapleyPlayers)) {
    fail(ErrorKind::kRefused, "exact shapley: " + std::to_string(p) + " perturbable positions exceed the bound of " +
                                  std::to_string(kMaxExactShapleyPlayers));
  }
  const TokenId base = baseline.value_or(caps.pad_id);
  const std::uint64_t count = std::uint64_t{1} << p;
  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(count);
  for (std::uint64_t bits = 0; bits < count; ++bits) {
    prompts.push_back(detail::masked_prompt(req, positions, coalition_mask(bits, p), base));
  }
  const auto v = oracle.slp_batch(prompts, req.continuation);
  detail::check_finite(v, "exact shapley");

  auto out = detail::empty_vector(req, AttributionMethod::kExactShapley, v[count - 1]);
  std::vector<double> weight_by_size(p, 0.0);
  for (std::size_t s = 0; s < p; ++s) {
    weight_by_size[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(p - s + 0.0) - std::lgamma(p + 1.0));
  }
  for (std::size_t i = 0; i < p; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double phi = 0.0;
    for (std::uint64_t bits = 0; bits < count; ++bits) {
      if (bits & bit) continue;
      phi += weight_by_size[static_cast<std::size_t>(std::popcount(bits))] * (v[bits | bit] - v[bits]);
    }
    out.scores[positions[i]] = phi;
  }
  out.validate();
  return out;
}

AttributionVector attribute_kshap(const oracle::Oracle& oracle, const AttributionRequest& req,
                                  const KshapParams& params, Rng& rng) {
  const auto caps = oracle.capabilities();
  oracle::require(caps.can_logprob, "can_logprob", oracle);
  const auto positions = req.perturbable();
  const std::size_t p = positions.size();
  const TokenId base = params.baseline.value_or(caps.pad_id);

  const std::vector<bool> none(p, false), all(p, true);
  const std::vector<std::vector<TokenId>> ends = {detail::masked_prompt(req, positions, none, base),
                                                  detail::masked_prompt(req, positions, all, base)};
  const auto end_values = oracle.slp_batch(ends, req.continuation);
  detail::check_finite(end_values, "kshap");
  auto out = detail::empty_vector(req, AttributionMethod::kKernelShap, end_values[1]);
  if (p == 0) return out;
  const double v0 = end_values[0];
  const double delta = end_values[1] - v0;
  if (p == 1) {
    out.scores[positions[0]] = delta;
    return out;
  }

  // Proper coalitions with their kernel weights.
  std::vector<std::vector<bool>> coalitions;
  std::vector<double> weights;
  if (params.exhaustive) {
    if (p > 16) fail(ErrorKind::kInvalidArgument, "kshap: exhaustive enumeration limited to 16 features");
    for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << p); ++bits) {
      const std::size_t s = static_cast<std::size_t>(std::popcount(bits));
      coalitions.push_back(coalition_mask(bits, p));
      weights.push_back((p - 1.0) / (std::exp(log_choose(p, s)) * s * (p - s)));
    }
  } else {
    if (params.n_samples < static_cast<int>(p) + 2) {
      fail(ErrorKind::kInvalidArgument, "kshap: n_samples must be at least feature count + 2");
    }
    // Size drawn with probability proportional to its total kernel mass, then
    // a uniform subset; every sample then carries equal weight.
    std::vector<double> size_mass(p, 0.0);
    double total = 0.0;
    for (std::size_t s = 1; s < p; ++s) total += size_mass[s] = (p - 1.0) / (s * (p - s));
    std::vector<std::size_t> order(p);
    for (int n = 0; n < params.n_samples; ++n) {
      double u = rng.uniform() * total;
      std::size_t s = 1;
      while (s + 1 < p && u >= size_mass[s]) u -= size_mass[s++];
      for (std::size_t j = 0; j < p; ++j) order[j] = j;
      std::vector<bool> m(p, false);
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t pick = j + rng.below(p - j);
        std::swap(order[j], order[pick]);
        m[order[j]] = true;
      }
      coalitions.push_back(std::move(m));
      weights.push_back(1.0);
    }
  }

  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(coalitions.size());
  for (const auto& m : coalitions) prompts.push_back(detail::masked_prompt(req, positions, m, base));
  const auto v = oracle.slp_batch(prompts, req.continuation);
  detail::check_finite(v, "kshap");

  // Efficiency constraint eliminates the last player: phi_last = delta - sum(others).
  const Eigen::Index n = static_cast<Eigen::Index>(coalitions.size());
  const Eigen::Index k = static_cast<Eigen::Index>(p) - 1;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n), sw(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double z_last = coalitions[r][p - 1] ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < k; ++j) x(r, j) = (coalitions[r][j] ? 1.0 : 0.0) - z_last;
    y(r) = v[r] - v0 - z_last * delta;
    sw(r) = std::sqrt(weights[r]);
  }
  const Eigen::MatrixXd xw = sw.asDiagonal() * x;
  const Eigen::VectorXd yw = sw.asDiagonal() * y;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  if (qr.rank() < k) fail(ErrorKind::kDegenerate, "kshap: sampled coalitions do not identify all players");
  const Eigen::VectorXd phi = qr.solve(yw);
  double rest = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    out.scores[positions[j]] = phi(j);
    rest += phi(j);
  }
  out.scores[positions[p - 1]] = delta - rest;
  out.validate();
  return out;
}

}  // namespace selfcon::attribution
