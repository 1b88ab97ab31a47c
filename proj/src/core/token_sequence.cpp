#include "selfcon/core/token_sequence.hpp"

#include <algorithm>

#include "selfcon/core/error.hpp"

namespace selfcon {

TokenSequence::TokenSequence(std::vector<TokenId> tokens, std::vector<std::string> pieces)
    : TokenSequence(tokens, std::move(pieces), std::vector<bool>(tokens.size(), false)) {}

TokenSequence::TokenSequence(std::vector<TokenId> tokens, std::vector<std::string> pieces,
                             std::vector<bool> skip_mask)
    : tokens_(std::move(tokens)), pieces_(std::move(pieces)), skip_mask_(std::move(skip_mask)) {
  if (pieces_.size() != tokens_.size() || skip_mask_.size() != tokens_.size()) {
    fail(ErrorKind::kInvalidArgument, "TokenSequence: tokens, pieces and skip_mask differ in length");
  }
  for (TokenId t : tokens_) {
    if (t < 0) fail(ErrorKind::kInvalidArgument, "TokenSequence: negative token id");
  }
}

std::size_t TokenSequence::unmasked_count() const {
  return static_cast<std::size_t>(std::count(skip_mask_.begin(), skip_mask_.end(), false));
}

TokenSequence TokenSequence::with_skip_mask(std::vector<bool> mask) const {
  return TokenSequence(tokens_, pieces_, std::move(mask));
}

TokenSequence TokenSequence::concat(const TokenSequence& tail) const {
  auto tokens = tokens_;
  auto pieces = pieces_;
  auto mask = skip_mask_;
  tokens.insert(tokens.end(), tail.tokens_.begin(), tail.tokens_.end());
  pieces.insert(pieces.end(), tail.pieces_.begin(), tail.pieces_.end());
  mask.insert(mask.end(), tail.skip_mask_.begin(), tail.skip_mask_.end());
  return TokenSequence(std::move(tokens), std::move(pieces), std::move(mask));
}

TokenSequence TokenSequence::prefix(std::size_t n) const {
  n = std::min(n, size());
  return TokenSequence({tokens_.begin(), tokens_.begin() + n}, {pieces_.begin(), pieces_.begin() + n},
                       {skip_mask_.begin(), skip_mask_.begin() + n});
}

}  // namespace selfcon
