#include "selfcon/core/mcqa.hpp"

#include <cmath>
#include <numeric>

#include "selfcon/core/error.hpp"

namespace selfcon {
namespace {

void append(std::vector<TokenId>& out, const std::vector<TokenId>& part) {
  out.insert(out.end(), part.begin(), part.end());
}

}  // namespace

TokenSequence render_decision_prompt(const McqaTask& task, const PromptTemplate& tpl, const Vocabulary& vocab) {
  if (task.options.size() > tpl.option_letters.size()) {
    fail(ErrorKind::kInvalidArgument, "task has more options than the template has letters");
  }
  std::vector<TokenId> ids;
  append(ids, tpl.begin);
  append(ids, tpl.question_header);
  append(ids, task.question);
  append(ids, tpl.newline);
  append(ids, tpl.choose_line);
  append(ids, tpl.newline);
  for (std::size_t i = 0; i < task.options.size(); ++i) {
    ids.push_back(tpl.option_letters[i]);
    append(ids, task.options[i]);
    append(ids, tpl.newline);
  }
  append(ids, tpl.answer_marker);
  return vocab.from_ids(std::move(ids));
}

TokenSequence render_explanation_prompt(const TokenSequence& x, std::span<const TokenId> decision,
                                        const PromptTemplate& tpl, const Vocabulary& vocab) {
  std::vector<TokenId> tail;
  append(tail, tpl.selected_marker);
  tail.insert(tail.end(), decision.begin(), decision.end());
  append(tail, tpl.newline);
  append(tail, tpl.why_line);
  append(tail, tpl.newline);
  append(tail, tpl.explanation_marker);
  return x.concat(vocab.from_ids(std::move(tail)));
}

std::size_t question_offset(const PromptTemplate& tpl) {
  return tpl.begin.size() + tpl.question_header.size();
}

std::optional<int> parse_option_letter(std::span<const TokenId> decision, const PromptTemplate& tpl,
                                       int option_count) {
  const int n = std::min<int>(option_count, static_cast<int>(tpl.option_letters.size()));
  for (TokenId t : decision) {
    for (int i = 0; i < n; ++i) {
      if (tpl.option_letters[static_cast<std::size_t>(i)] == t) return i;
    }
  }
  return std::nullopt;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation" || text == "val") return Split::kValidation;
  if (text == "test") return Split::kTest;
  fail(ErrorKind::kParse, "unknown split '" + std::string(text) + "'");
}

std::vector<std::size_t> largest_remainder_sizes(std::size_t n, std::span<const double> ratios) {
  const double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  if (ratios.empty() || std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorKind::kValidation, "split ratios must sum to 1");
  }
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> remainder(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i] < 0.0) fail(ErrorKind::kValidation, "split ratios must be non-negative");
    const double exact = ratios[i] * static_cast<double>(n);
    // Guard against 0.7 * 100 = 70.00000000000001 style representation noise.
    const double fl = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    remainder[i] = std::max(0.0, exact - fl);
    assigned += sizes[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ratios.size(); ++i) {
      if (remainder[i] > remainder[best] + 1e-12) best = i;
    }
    ++sizes[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

std::vector<Split> assign_splits(std::size_t n, std::span<const double> ratios, Rng rng) {
  if (ratios.size() != 3) fail(ErrorKind::kValidation, "expected three split ratios (train/validation/test)");
  const auto sizes = largest_remainder_sizes(n, ratios);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<Split> out(n, Split::kTrain);
  std::size_t pos = 0;
  for (std::size_t part = 0; part < 3; ++part) {
    for (std::size_t c = 0; c < sizes[part]; ++c) out[order[pos++]] = static_cast<Split>(part);
  }
  return out;
}

}  // namespace selfcon
