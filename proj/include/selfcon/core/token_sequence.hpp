#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace selfcon {

using TokenId = std::int32_t;

/// Tokenized text with a per-token skip flag. Skip-flagged positions are
/// kept in place (never deleted) so vectors stay index-aligned.
class TokenSequence {
 public:
  TokenSequence() = default;
  TokenSequence(std::vector<TokenId> tokens, std::vector<std::string> pieces);
  TokenSequence(std::vector<TokenId> tokens, std::vector<std::string> pieces,
                std::vector<bool> skip_mask);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  std::span<const TokenId> tokens() const { return tokens_; }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::vector<bool>& skip_mask() const { return skip_mask_; }

  TokenId operator[](std::size_t i) const { return tokens_[i]; }

  std::size_t unmasked_count() const;

  TokenSequence with_skip_mask(std::vector<bool> mask) const;
  /// Concatenation; the skip masks are concatenated as well.
  TokenSequence concat(const TokenSequence& tail) const;
  TokenSequence prefix(std::size_t n) const;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

 private:
  std::vector<TokenId> tokens_;
  std::vector<std::string> pieces_;
  std::vector<bool> skip_mask_;
};

}  // namespace selfcon
