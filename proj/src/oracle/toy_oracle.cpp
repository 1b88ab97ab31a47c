#include "selfcon/oracle/toy_oracle.hpp"

#include "selfcon/oracle/sampling.hpp"
#include "selfcon/toylm/forward.hpp"
#include "selfcon/toylm/tasks.hpp"

namespace selfcon::oracle {

ToyOracle::ToyOracle(const toylm::ToyModelState& state, std::string label)
    : state_(toylm::merge_adapter(state)), label_(std::move(label)) {}

OracleCapabilities ToyOracle::capabilities() const {
  OracleCapabilities caps;
  caps.can_logprob = caps.can_sample = caps.can_gradient = caps.can_embed = true;
  caps.vocab_size = state_.config.vocab;
  caps.max_context = state_.config.context;
  caps.eos_id = toylm::tok::kEos;
  caps.pad_id = toylm::tok::kPad;
  return caps;
}

LogProbResult ToyOracle::logprob(std::span<const TokenId> prompt, std::span<const TokenId> continuation) const {
  auto r = toylm::forward_slp(state_, prompt, continuation);
  return {std::move(r.per_token_logprob), r.slp};
}

std::vector<double> ToyOracle::next_logprobs(std::span<const TokenId> prefix) const {
  return toylm::next_token_logprobs(state_, prefix);
}

std::vector<TokenId> ToyOracle::sample(std::span<const TokenId> prompt, const SampleParams& params) const {
  return sample_autoregressive([this](std::span<const TokenId> prefix) { return next_logprobs(prefix); }, prompt,
                               params, toylm::tok::kEos, state_.config.context);
}

std::vector<double> ToyOracle::slp_batch(std::span<const std::vector<TokenId>> prompts,
                                         std::span<const TokenId> continuation) const {
  constexpr std::size_t kChunk = 32;
  std::vector<double> out;
  out.reserve(prompts.size());
  for (std::size_t begin = 0; begin < prompts.size(); begin += kChunk) {
    const std::size_t end = std::min(prompts.size(), begin + kChunk);
    std::vector<toylm::SequenceSpec> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back({prompts[i], {continuation.begin(), continuation.end()}});
    toylm::SlpGraph g = toylm::build_slp_graph(state_, batch, {});
    auto slps = g.tape.value(g.slps);
    out.insert(out.end(), slps.begin(), slps.end());
  }
  return out;
}

int ToyOracle::embedding_width() const { return state_.config.width; }

std::vector<double> ToyOracle::embed(std::span<const TokenId> ids) const {
  return toylm::token_embeddings(state_, ids);
}

std::vector<EmbeddingGradient> ToyOracle::slp_gradients(std::span<const TokenId> prompt,
                                                        std::span<const TokenId> continuation,
                                                        std::span<const std::vector<double>> prompt_embeddings) const {
  auto grads = toylm::grad_slp_wrt_embeddings_batch(state_, prompt, continuation, prompt_embeddings);
  std::vector<EmbeddingGradient> out;
  out.reserve(grads.size());
  for (auto& g : grads) out.push_back({g.slp, std::move(g.grad)});
  return out;
}

}  // namespace selfcon::oracle
