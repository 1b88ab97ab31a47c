#include "selfcon/core/vocabulary.hpp"

#include <sstream>

#include "selfcon/core/error.hpp"

namespace selfcon {

Vocabulary::Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!index_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
      fail(ErrorKind::kInvalidArgument, "Vocabulary: duplicate piece '" + pieces_[i] + "'");
    }
  }
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
    fail(ErrorKind::kInvalidArgument, "Vocabulary: token id " + std::to_string(id) + " out of range");
  }
  return pieces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view piece) const {
  auto found = find(piece);
  if (!found) fail(ErrorKind::kInvalidArgument, "Vocabulary: unknown piece '" + std::string(piece) + "'");
  return *found;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::vector<TokenId> ids;
  std::string word;
  while (in >> word) ids.push_back(id(word));
  return from_ids(std::move(ids));
}

TokenSequence Vocabulary::from_ids(std::vector<TokenId> ids) const {
  std::vector<std::string> pieces;
  pieces.reserve(ids.size());
  for (TokenId t : ids) pieces.push_back(piece(t));
  return TokenSequence(std::move(ids), std::move(pieces));
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId t : ids) {
    if (!out.empty()) out += ' ';
    out += piece(t);
  }
  return out;
}

}  // namespace selfcon
