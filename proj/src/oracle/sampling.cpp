#include "selfcon/oracle/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfcon/core/error.hpp"

namespace selfcon::oracle {

std::vector<std::pair<TokenId, double>> nucleus(std::span<const double> logprobs, double top_p, double temperature) {
  if (logprobs.empty()) fail(ErrorKind::kInvalidArgument, "nucleus: empty distribution");
  if (!(temperature > 0.0)) fail(ErrorKind::kInvalidArgument, "nucleus: temperature must be > 0");
  const double mx = *std::max_element(logprobs.begin(), logprobs.end());
  std::vector<std::pair<TokenId, double>> probs(logprobs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    const double w = std::exp((logprobs[i] - mx) / temperature);
    probs[i] = {static_cast<TokenId>(i), w};
    z += w;
  }
  for (auto& p : probs) p.second /= z;
  std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < probs.size()) {
    mass += probs[keep].second;
    ++keep;
    if (mass >= top_p) break;
  }
  probs.resize(keep);
  for (auto& p : probs) p.second /= mass;
  return probs;
}

TokenId draw_next(std::span<const double> logprobs, const SampleParams& params, Rng& rng) {
  if (params.greedy) {
    return static_cast<TokenId>(std::max_element(logprobs.begin(), logprobs.end()) - logprobs.begin());
  }
  const auto support = nucleus(logprobs, params.top_p, params.temperature);
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& [id, p] : support) {
    acc += p;
    if (u < acc) return id;
  }
  return support.back().first;
}

std::vector<TokenId> sample_autoregressive(const NextTokenFn& next, std::span<const TokenId> prompt,
                                           const SampleParams& params, TokenId eos, int max_context) {
  params.validate();
  if (static_cast<int>(prompt.size()) >= max_context) {
    fail(ErrorKind::kContextOverflow, "prompt leaves no room for generation");
  }
  Rng rng(params.seed, "sample");
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  while (static_cast<int>(out.size()) < params.max_tokens && static_cast<int>(seq.size()) < max_context) {
    const auto lp = next(seq);
    const TokenId t = draw_next(lp, params, rng);
    if (t == eos) break;
    out.push_back(t);
    seq.push_back(t);
  }
  return out;
}

}  // namespace selfcon::oracle
