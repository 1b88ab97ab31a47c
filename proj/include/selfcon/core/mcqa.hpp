#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "selfcon/core/rng.hpp"
#include "selfcon/core/token_sequence.hpp"
#include "selfcon/core/vocabulary.hpp"

namespace selfcon {

/// One multiple-choice instance, already tokenized.
struct McqaTask {
  std::uint64_t id = 0;
  std::vector<TokenId> question;
  std::vector<std::vector<TokenId>> options;
  int gold = 0;                   // index into options
  std::vector<int> key_positions;  // indices into `question`; empty when unknown
  std::string profile;
};

/// Token-level prompt scaffolding for the decision and explanation prompts.
/// Every field is a token-id list so the same templates work for any vocabulary.
struct PromptTemplate {
  std::vector<TokenId> begin;           // e.g. <bos>
  std::vector<TokenId> question_header;  // "Question:"
  std::vector<TokenId> newline;
  std::vector<TokenId> choose_line;      // "Choose the most plausible answer ..."
  std::vector<TokenId> option_letters;   // one token per option label
  std::vector<TokenId> answer_marker;    // "Answer:"
  std::vector<TokenId> selected_marker;  // "Selected Answer:"
  std::vector<TokenId> why_line;         // "Why did you make that choice? ..."
  std::vector<TokenId> explanation_marker;
  TokenId eos = 0;
  TokenId pad = 0;
};

/// Decision prompt x: question, instruction, lettered options, answer marker.
TokenSequence render_decision_prompt(const McqaTask& task, const PromptTemplate& tpl, const Vocabulary& vocab);

/// Explanation prompt: x followed by the selected answer and the why/explanation
/// lines. Positions [0, x.size()) are exactly x.
TokenSequence render_explanation_prompt(const TokenSequence& x, std::span<const TokenId> decision,
                                        const PromptTemplate& tpl, const Vocabulary& vocab);

/// Offset of question token 0 inside the decision prompt.
std::size_t question_offset(const PromptTemplate& tpl);

/// Index of the first decision token that is one of the first `option_count`
/// option letters; nullopt on parse failure.
std::optional<int> parse_option_letter(std::span<const TokenId> decision, const PromptTemplate& tpl,
                                       int option_count);

enum class Split { kTrain, kValidation, kTest };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Largest-remainder apportionment of n items over the ratios (which must sum
/// to 1 within 1e-9). Ties on the remainder go to the earlier part.
std::vector<std::size_t> largest_remainder_sizes(std::size_t n, std::span<const double> ratios);

/// Seeded shuffle of [0, n) cut into consecutive parts of the given sizes;
/// returns the part index of every item.
std::vector<Split> assign_splits(std::size_t n, std::span<const double> ratios, Rng rng);

}  // namespace selfcon
