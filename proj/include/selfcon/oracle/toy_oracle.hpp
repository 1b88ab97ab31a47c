#pragma once

#include <memory>

#include "selfcon/oracle/oracle.hpp"
#include "selfcon/toylm/model.hpp"

namespace selfcon::oracle {

/// Local oracle over the built-in transformer. The adapter, if any, is folded
/// into the weights once at construction; the snapshot is immutable.
class ToyOracle final : public Oracle {
 public:
  explicit ToyOracle(const toylm::ToyModelState& state, std::string label = "toy");

  OracleCapabilities capabilities() const override;
  std::string id() const override { return label_; }
  LogProbResult logprob(std::span<const TokenId> prompt, std::span<const TokenId> continuation) const override;
  std::vector<TokenId> sample(std::span<const TokenId> prompt, const SampleParams& params) const override;
  std::vector<double> slp_batch(std::span<const std::vector<TokenId>> prompts,
                                std::span<const TokenId> continuation) const override;
  int embedding_width() const override;
  std::vector<double> embed(std::span<const TokenId> ids) const override;
  std::vector<EmbeddingGradient> slp_gradients(std::span<const TokenId> prompt, std::span<const TokenId> continuation,
                                               std::span<const std::vector<double>> prompt_embeddings) const override;

  const toylm::ToyModelState& state() const { return state_; }
  /// Full next-token log-softmax after `prefix`.
  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const;

 private:
  toylm::ToyModelState state_;
  std::string label_;
};

}  // namespace selfcon::oracle
