#pragma once

#include <span>
#include <vector>

#include "selfcon/core/token_sequence.hpp"
#include "selfcon/toylm/model.hpp"
#include "selfcon/toylm/tape.hpp"

namespace selfcon::toylm {

enum class GradScope { kNone, kBase, kAdapter };

/// One prompt/continuation pair evaluated in a batch.
struct SequenceSpec {
  std::vector<TokenId> prompt;
  std::vector<TokenId> continuation;
};

struct GraphOptions {
  GradScope scope = GradScope::kNone;
  /// Make the input token-embedding rows a grad-requiring leaf.
  bool embedding_grad = false;
  /// Optional replacement for the token-embedding rows of the whole batch
  /// ([total_rows x width]); positional embeddings are still added.
  const std::vector<double>* input_embeddings = nullptr;
  /// Optional per-row flag: keys that no other position may attend to.
  std::vector<bool> blocked_keys;
  /// Evaluate the adapter when present (false = reference policy).
  bool use_adapter = true;
};

/// Built graph plus handles to the pieces callers read back.
struct SlpGraph {
  Tape tape;
  Tape::Var slps;              // [batch x 1]
  Tape::Var logits;            // [sum of continuation lengths x vocab]
  Tape::Var token_logprobs;    // [sum of continuation lengths x 1]
  Tape::Var input_embeddings;  // [total rows x width]
  std::vector<Tape::Segment> segments;
  std::vector<std::pair<std::string, Tape::Var>> params;  // base or adapter views, by name
};

SlpGraph build_slp_graph(const ToyModelState& state, std::span<const SequenceSpec> batch,
                         const GraphOptions& options);

struct LogProbResult {
  std::vector<double> per_token_logprob;
  double slp = 0.0;
};

/// Teacher-forced sequence log-probability.
LogProbResult forward_slp(const ToyModelState& state, std::span<const TokenId> prompt,
                          std::span<const TokenId> continuation, bool use_adapter = true);

/// Log-softmax over the vocabulary for the token following `tokens`.
std::vector<double> next_token_logprobs(const ToyModelState& state, std::span<const TokenId> tokens);

/// Token-embedding rows (no positional term) for the given ids.
std::vector<double> token_embeddings(const ToyModelState& state, std::span<const TokenId> ids);

struct EmbeddingGradient {
  double slp = 0.0;
  std::vector<double> grad;  // [prompt rows x width]
};

/// d slp / d (prompt token-embedding rows). `prompt_embeddings` replaces the
/// prompt's token-embedding rows when non-empty (used for path integration).
EmbeddingGradient grad_slp_wrt_embeddings(const ToyModelState& state, std::span<const TokenId> prompt,
                                          std::span<const TokenId> continuation,
                                          const std::vector<double>& prompt_embeddings = {},
                                          const std::vector<bool>& blocked_keys = {});

/// Batched form: one gradient per replacement matrix, same prompt/continuation.
std::vector<EmbeddingGradient> grad_slp_wrt_embeddings_batch(
    const ToyModelState& state, std::span<const TokenId> prompt, std::span<const TokenId> continuation,
    std::span<const std::vector<double>> prompt_embeddings);

/// d slp / d params over the chosen scope, laid out like state.base
/// (kBase) or state.adapter->params (kAdapter).
std::vector<double> grad_slp_wrt_params(const ToyModelState& state, std::span<const TokenId> prompt,
                                        std::span<const TokenId> continuation, GradScope scope);

/// Collects parameter gradients of a built graph into a flat array.
std::vector<double> collect_param_grad(const SlpGraph& graph, const ToyModelState& state, GradScope scope);

}  // namespace selfcon::toylm
