#include "selfcon/oracle/oracle.hpp"

#include <cmath>

#include "selfcon/core/error.hpp"

namespace selfcon::oracle {

void OracleCapabilities::validate() const {
  if (can_gradient && !can_embed) fail(ErrorKind::kValidation, "capabilities: can_gradient requires can_embed");
  if (vocab_size <= 0 || max_context <= 0) fail(ErrorKind::kValidation, "capabilities: sizes must be positive");
  if (eos_id < 0 || eos_id >= vocab_size || pad_id < 0 || pad_id >= vocab_size) {
    fail(ErrorKind::kValidation, "capabilities: eos/pad ids outside the vocabulary");
  }
}

void SampleParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) fail(ErrorKind::kInvalidArgument, "top_p must be in (0, 1]");
  if (!greedy && !(temperature > 0.0)) fail(ErrorKind::kInvalidArgument, "temperature must be > 0 (use greedy)");
  if (max_tokens < 1) fail(ErrorKind::kInvalidArgument, "max_tokens must be >= 1");
}

void require(bool flag, const char* capability, const Oracle& oracle) {
  if (!flag) {
    fail(ErrorKind::kCapabilityMissing, "oracle '" + oracle.id() + "' lacks capability " + capability);
  }
}

std::vector<double> Oracle::slp_batch(std::span<const std::vector<TokenId>> prompts,
                                      std::span<const TokenId> continuation) const {
  std::vector<double> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(logprob(p, continuation).slp);
  return out;
}

int Oracle::embedding_width() const {
  require(false, "can_embed", *this);
  return 0;
}

std::vector<double> Oracle::embed(std::span<const TokenId>) const {
  require(false, "can_embed", *this);
  return {};
}

std::vector<EmbeddingGradient> Oracle::slp_gradients(std::span<const TokenId>, std::span<const TokenId>,
                                                     std::span<const std::vector<double>>) const {
  require(false, "can_gradient", *this);
  return {};
}

}  // namespace selfcon::oracle
