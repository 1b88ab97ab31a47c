#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfcon/core/token_sequence.hpp"

namespace selfcon::oracle {

struct OracleCapabilities {
  bool can_logprob = false;
  bool can_sample = false;
  bool can_gradient = false;
  bool can_embed = false;
  int vocab_size = 0;
  int max_context = 0;
  TokenId eos_id = 0;
  TokenId pad_id = 0;

  /// can_gradient requires can_embed; sizes must be positive.
  void validate() const;
  friend bool operator==(const OracleCapabilities&, const OracleCapabilities&) = default;
};

/// Teacher-forced log-probabilities (natural log) of a continuation.
struct LogProbResult {
  std::vector<double> per_token_logprob;
  double slp = 0.0;
};

struct SampleParams {
  double top_p = 0.9;
  double temperature = 0.7;
  int max_tokens = 400;
  std::uint64_t seed = 42;
  bool greedy = false;  // argmax decoding; temperature and top_p are ignored

  void validate() const;
};

struct EmbeddingGradient {
  double slp = 0.0;
  std::vector<double> grad;  // [prompt length x width]
};

/// Any autoregressive language model. Calls never mutate model state and are
/// safe to issue concurrently.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual OracleCapabilities capabilities() const = 0;
  virtual std::string id() const = 0;

  virtual LogProbResult logprob(std::span<const TokenId> prompt, std::span<const TokenId> continuation) const = 0;
  /// Generated tokens (the end-of-sequence token is not included).
  virtual std::vector<TokenId> sample(std::span<const TokenId> prompt, const SampleParams& params) const = 0;

  /// Sequence log-probabilities of one continuation under many prompts, in
  /// input order. The default loops over logprob().
  virtual std::vector<double> slp_batch(std::span<const std::vector<TokenId>> prompts,
                                        std::span<const TokenId> continuation) const;

  // Gradient-capable oracles only; the defaults throw kCapabilityMissing.
  virtual int embedding_width() const;
  virtual std::vector<double> embed(std::span<const TokenId> ids) const;
  /// d slp / d prompt-embedding rows at each replacement point (each a
  /// [prompt length x width] matrix of token embeddings).
  virtual std::vector<EmbeddingGradient> slp_gradients(std::span<const TokenId> prompt,
                                                       std::span<const TokenId> continuation,
                                                       std::span<const std::vector<double>> prompt_embeddings) const;

  LogProbResult logprob(const TokenSequence& prompt, const TokenSequence& continuation) const {
    return logprob(prompt.tokens(), continuation.tokens());
  }
};

/// Throws kCapabilityMissing unless `flag` is set.
void require(bool flag, const char* capability, const Oracle& oracle);

}  // namespace selfcon::oracle
