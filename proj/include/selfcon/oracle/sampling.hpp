#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "selfcon/core/rng.hpp"
#include "selfcon/core/token_sequence.hpp"
#include "selfcon/oracle/oracle.hpp"

namespace selfcon::oracle {

/// Nucleus of a next-token distribution: after temperature scaling, the
/// smallest probability-sorted prefix whose mass reaches top_p, renormalized.
/// Sorted by probability descending, ties by lower id. Returns (id, prob).
std::vector<std::pair<TokenId, double>> nucleus(std::span<const double> logprobs, double top_p, double temperature);

/// Draws one token (greedy = argmax, lowest id on ties).
TokenId draw_next(std::span<const double> logprobs, const SampleParams& params, Rng& rng);

using NextTokenFn = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

/// Autoregressive loop shared by local oracles: stops at eos (not emitted),
/// at max_tokens, or when the context is full.
std::vector<TokenId> sample_autoregressive(const NextTokenFn& next, std::span<const TokenId> prompt,
                                           const SampleParams& params, TokenId eos, int max_context);

}  // namespace selfcon::oracle
