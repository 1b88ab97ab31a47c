#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfcon/core/token_sequence.hpp"

namespace selfcon {

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> pieces);

  std::size_t size() const { return pieces_.size(); }
  bool empty() const { return pieces_.empty(); }
  const std::string& piece(TokenId id) const;
  std::optional<TokenId> find(std::string_view piece) const;
  TokenId id(std::string_view piece) const;  // throws on unknown piece

  /// Whitespace tokenization over exact pieces.
  TokenSequence encode(std::string_view text) const;
  TokenSequence from_ids(std::vector<TokenId> ids) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace selfcon
