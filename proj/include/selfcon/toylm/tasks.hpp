#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "selfcon/core/mcqa.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/core/vocabulary.hpp"

namespace selfcon::toylm {

/// The built-in 128-piece vocabulary: structural pieces, option letters and
/// content words w0..w108.
const Vocabulary& toy_vocabulary();
const PromptTemplate& toy_template();

namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kNewline = 3;
inline constexpr TokenId kArrow = 12;
inline constexpr TokenId kPeriod = 10;
inline constexpr TokenId kBecause = 13;
inline constexpr TokenId kFirstWord = 19;
}  // namespace tok

/// Which region of the word vocabulary a synthetic domain draws from, and how
/// key tokens map to answers.
struct TaskProfile {
  std::string name = "alpha";
  int question_length = 4;
  int option_count = 4;
  int key_first = 0;  // word indices (w<i>), not token ids
  int key_count = 16;
  int answer_first = 16;
  int answer_count = 16;
  int distractor_first = 32;
  int distractor_count = 24;
  std::uint64_t mapping_seed = 7;
  /// Keys [0, misconceptions) are taught a wrong answer during pretraining;
  /// that wrong answer is always among the options so the error is stable.
  int misconceptions = 3;

  TokenId key_token(int i) const { return tok::kFirstWord + key_first + i; }
  TokenId answer_token(int i) const { return tok::kFirstWord + answer_first + i; }
  TokenId distractor_token(int i) const { return tok::kFirstWord + distractor_first + i; }
  /// Answer word index for key index i (a fixed permutation per profile).
  int gold_answer(int key) const;
  /// Answer word index the pretraining mixture associates with key i.
  int taught_answer(int key) const;
  void validate() const;
};

TaskProfile profile_by_name(std::string_view name);  // "alpha" or "beta"

/// Generated synthetic multiple-choice instance (correct letter depends only
/// on the key token).
using SyntheticTask = McqaTask;

struct TaskCorpus {
  std::string profile;
  std::uint64_t seed = 0;
  std::vector<SyntheticTask> tasks;
  std::vector<Split> splits;  // parallel to tasks

  std::vector<std::size_t> indices(Split split) const;
};

/// Deterministic under (seed, profile); pre-split 70/20/10 (largest remainder)
/// with Rng(seed, "split").
TaskCorpus generate_task_corpus(std::uint64_t seed, std::size_t n, const TaskProfile& profile);
/// Same tasks, split by the given ratios with Rng(split_seed, "split").
TaskCorpus generate_task_corpus(std::uint64_t seed, std::size_t n, const TaskProfile& profile,
                                std::span<const double> split_ratios, std::uint64_t split_seed);

/// Key index of a task (position of its key token in the profile), or -1.
int key_index(const SyntheticTask& task, const TaskProfile& profile);

void save_corpus(const TaskCorpus& corpus, const std::filesystem::path& path);
TaskCorpus load_corpus(const std::filesystem::path& path);

/// Generic external dataset: one JSON object per line with `question`
/// (token-id array or whitespace-separated pieces), `options` (same) and
/// `gold` (option index or letter).
TaskCorpus load_external_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                 std::span<const double> split_ratios, std::uint64_t split_seed);

}  // namespace selfcon::toylm
