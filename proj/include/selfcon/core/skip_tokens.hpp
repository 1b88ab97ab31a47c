#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "selfcon/core/token_sequence.hpp"
#include "selfcon/core/vocabulary.hpp"

namespace selfcon {

struct SkipTokenSet {
  std::set<std::string> literals;
  std::set<TokenId> ids;
  std::vector<std::string> unresolved;  // sorted, literals absent from the vocabulary

  bool contains(TokenId id) const { return ids.count(id) > 0; }
};

/// The structure tokens excluded for the LLaMA 3.x chat format.
std::set<std::string> llama3_skip_literals();

/// Reads one literal per line; `#` starts a comment, blank lines ignored.
/// Leading/trailing whitespace is trimmed.
std::set<std::string> load_skip_literals(const std::filesystem::path& path);

SkipTokenSet resolve_skip_set(const std::set<std::string>& literals,
                              const Vocabulary& vocab);

TokenSequence apply_skip_mask(const TokenSequence& seq, const SkipTokenSet& skips);

}  // namespace selfcon
