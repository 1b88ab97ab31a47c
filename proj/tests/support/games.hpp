#pragma once

// Synthetic oracles with known attributions: presence-mask games for the
// perturbation estimators and an embedding-linear model for path gradients.

#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

#include "selfcon/attribution/attribution.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/oracle/oracle.hpp"

namespace games {

using selfcon::TokenId;
using namespace selfcon::oracle;

inline constexpr TokenId kBaseline = 0;

/// Value of a coalition given as a bit set over the first `players` prompt
/// positions; a position is present when its token differs from the baseline.
class GameOracle final : public Oracle {
 public:
  GameOracle(std::function<double(std::uint32_t)> value, int players)
      : value_(std::move(value)), players_(players) {}

  OracleCapabilities capabilities() const override {
    OracleCapabilities c;
    c.can_logprob = true;
    c.vocab_size = 64;
    c.max_context = 64;
    c.pad_id = kBaseline;
    return c;
  }
  std::string id() const override { return "game"; }
  LogProbResult logprob(std::span<const TokenId> prompt, std::span<const TokenId>) const override {
    ++calls;
    std::uint32_t bits = 0;
    for (int i = 0; i < players_; ++i) {
      if (prompt[static_cast<std::size_t>(i)] != kBaseline) bits |= 1u << i;
    }
    const double v = value_(bits);
    return {{v}, v};
  }
  std::vector<TokenId> sample(std::span<const TokenId>, const SampleParams&) const override { return {}; }

  mutable std::atomic<long> calls{0};

 private:
  std::function<double(std::uint32_t)> value_;
  int players_;
};

/// Request over `players` present tokens (ids 1..players), no context.
inline selfcon::attribution::AttributionRequest game_request(int players, std::vector<bool> skip = {}) {
  std::vector<TokenId> ids;
  std::vector<std::string> pieces;
  for (int i = 0; i < players; ++i) {
    ids.push_back(static_cast<TokenId>(i + 1));
    pieces.push_back("t" + std::to_string(i + 1));
  }
  if (skip.empty()) skip.assign(static_cast<std::size_t>(players), false);
  return {selfcon::TokenSequence(ids, pieces, skip), {}, {1}};
}

inline std::function<double(std::uint32_t)> linear_game(std::vector<double> w, double bias) {
  return [w = std::move(w), bias](std::uint32_t bits) {
    double v = bias;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (bits & (1u << i)) v += w[i];
    }
    return v;
  };
}

/// Arbitrary game with random values on every coalition.
inline std::function<double(std::uint32_t)> random_game(int players, selfcon::Rng& rng) {
  std::vector<double> table(std::size_t{1} << players);
  for (double& v : table) v = rng.normal();
  return [table = std::move(table)](std::uint32_t bits) { return table[bits]; };
}

/// slp = bias + sum_i W_i . e_i over prompt embedding rows, so every path
/// gradient is exactly W and LIG is exact at any step count.
class LinearEmbeddingOracle final : public Oracle {
 public:
  LinearEmbeddingOracle(int width, int rows, std::uint64_t seed) : width_(width) {
    selfcon::Rng rng(seed, "linear-embedding");
    table_.resize(static_cast<std::size_t>(64 * width));
    for (double& v : table_) v = rng.normal();
    weights_.resize(static_cast<std::size_t>(rows * width));
    for (double& v : weights_) v = rng.normal();
  }

  OracleCapabilities capabilities() const override {
    OracleCapabilities c;
    c.can_logprob = c.can_gradient = c.can_embed = true;
    c.vocab_size = 64;
    c.max_context = 64;
    c.pad_id = kBaseline;
    return c;
  }
  std::string id() const override { return "linear-embedding"; }
  LogProbResult logprob(std::span<const TokenId> prompt, std::span<const TokenId>) const override {
    const double v = value(embed(prompt));
    return {{v}, v};
  }
  std::vector<TokenId> sample(std::span<const TokenId>, const SampleParams&) const override { return {}; }
  int embedding_width() const override { return width_; }
  std::vector<double> embed(std::span<const TokenId> ids) const override {
    std::vector<double> out;
    for (TokenId t : ids) {
      const auto* row = table_.data() + static_cast<std::size_t>(t) * width_;
      out.insert(out.end(), row, row + width_);
    }
    return out;
  }
  std::vector<EmbeddingGradient> slp_gradients(std::span<const TokenId>, std::span<const TokenId>,
                                               std::span<const std::vector<double>> points) const override {
    std::vector<EmbeddingGradient> out;
    for (const auto& e : points) {
      out.push_back({value(e), std::vector<double>(weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(e.size()))});
    }
    return out;
  }

  /// Closed-form attribution of position i: (e_i - b) . W_i.
  double expected(std::span<const TokenId> prompt, std::size_t i) const {
    const auto e = embed(prompt.subspan(i, 1));
    const auto b = embed(std::vector<TokenId>{kBaseline});
    double s = 0.0;
    for (int d = 0; d < width_; ++d) s += (e[d] - b[d]) * weights_[i * width_ + d];
    return s;
  }

 private:
  double value(const std::vector<double>& e) const {
    double v = 0.25;
    for (std::size_t t = 0; t < e.size(); ++t) v += weights_[t] * e[t];
    return v;
  }

  int width_;
  std::vector<double> table_;
  std::vector<double> weights_;
};

/// Brute-force Shapley values straight from the permutation-free formula,
/// independent of the production estimator.
inline std::vector<double> brute_shapley(const std::function<double(std::uint32_t)>& v, int p) {
  std::vector<double> fact(static_cast<std::size_t>(p) + 1, 1.0);
  for (int i = 1; i <= p; ++i) fact[i] = fact[i - 1] * i;
  std::vector<double> phi(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    for (std::uint32_t s = 0; s < (1u << p); ++s) {
      if (s & (1u << i)) continue;
      const int size = __builtin_popcount(s);
      phi[i] += fact[size] * fact[p - size - 1] / fact[p] * (v(s | (1u << i)) - v(s));
    }
  }
  return phi;
}

}  // namespace games
