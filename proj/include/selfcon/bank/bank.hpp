#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "selfcon/alignment/alignment.hpp"
#include "selfcon/attribution/attribution.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/core/mcqa.hpp"
#include "selfcon/core/skip_tokens.hpp"
#include "selfcon/oracle/oracle.hpp"

namespace selfcon::bank {

/// What the decision's attribution target covers.
enum class DecisionTarget { kFullAnswer, kLetterOnly };

struct BankConfig {
  int k = 5;
  alignment::Metric metric = alignment::Metric::kCcSp;
  AttributionMethod method = AttributionMethod::kLime;
  attribution::LimeParams lime;
  attribution::LigParams lig;
  attribution::KshapParams kshap;
  std::uint64_t attribution_seed = 42;
  oracle::SampleParams sample;
  std::vector<std::uint64_t> explanation_seeds = {42, 43, 44, 45, 46};
  int decision_max_tokens = 8;
  DecisionTarget decision_target = DecisionTarget::kFullAnswer;
  std::vector<double> split_ratios = {0.7, 0.2, 0.1};
  std::uint64_t split_seed = 42;
  std::optional<Split> split = Split::kTrain;  // nullopt = every instance
  std::size_t max_instances = 0;              // 0 = no cap; otherwise the first N of the split
  int threads = 1;

  /// Throws kValidation naming the offending field.
  void validate() const;
};

/// Toy-model profile: path-integrated gradients, 32-token explanations.
BankConfig toy_bank_config();

/// Prompt rendering shared by all records.
struct PromptFormat {
  const Vocabulary* vocab = nullptr;
  const PromptTemplate* tpl = nullptr;
  SkipTokenSet skips;
};

struct Decision {
  std::vector<TokenId> tokens;
  std::optional<int> option;  // parsed option index
  bool correct = false;
};

struct BankRecord {
  std::uint64_t id = 0;
  std::string profile;
  Split split = Split::kTrain;
  int gold = 0;
  TokenSequence x;
  Decision decision;
  std::vector<TokenId> context;  // explanation prompt after x
  std::vector<std::vector<TokenId>> explanations;
  AttributionVector dec_attr;
  std::vector<AttributionVector> exp_attrs;
  alignment::ExplanationRanking sp;
  alignment::ExplanationRanking cos;

  const alignment::ExplanationRanking& ranking(alignment::Metric metric) const {
    return metric == alignment::Metric::kCcSp ? sp : cos;
  }
};

Decision elicit_decision(const oracle::Oracle& oracle, const McqaTask& task, const TokenSequence& x,
                         const PromptFormat& format, int max_tokens);

std::vector<std::vector<TokenId>> sample_explanations(const oracle::Oracle& oracle,
                                                      std::span<const TokenId> explanation_prompt,
                                                      const BankConfig& config);

/// Runs decision, explanations, attribution and alignment for one task. The
/// decider answers and is attributed for the decision; the explainer writes
/// and is attributed for the explanations.
BankRecord process_instance(const oracle::Oracle& decider, const oracle::Oracle& explainer, const McqaTask& task,
                            Split split, const PromptFormat& format, const BankConfig& config);

/// Attribution of `continuation` over x with the configured estimator.
AttributionVector attribute(const oracle::Oracle& oracle, const TokenSequence& x, std::span<const TokenId> context,
                            std::span<const TokenId> continuation, const BankConfig& config, std::uint64_t stream);

struct AggregateStat {
  double worst = 0.0, mean = 0.0, best = 0.0;
  double worst_se = 0.0, mean_se = 0.0, best_se = 0.0;
};

struct BankSummary {
  std::size_t records = 0;
  std::size_t errors = 0;
  std::size_t parse_failures = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // over parsed decisions
  AggregateStat sp;
  AggregateStat cos;
  std::size_t degenerate_sp = 0;
  std::size_t degenerate_cos = 0;
};

/// Per-record worst/mean/best over k explanations, then averaged (SE = std/sqrt(N)).
AggregateStat aggregate(std::span<const BankRecord> records, alignment::Metric metric);
BankSummary summarize(std::span<const BankRecord> records, std::size_t errors);

struct RecordError {
  std::uint64_t id = 0;
  std::string kind;
  std::string message;
};

struct Bank {
  std::string oracle_id;
  std::string config_json;  // canonical config text recorded in the header
  std::vector<BankRecord> records;
  std::vector<RecordError> errors;
};

/// Instances processed in corpus order; per-record failures go to `errors`.
Bank build_bank(const oracle::Oracle& decider, const oracle::Oracle& explainer, std::span<const McqaTask> tasks,
                std::span<const Split> splits, const PromptFormat& format, const BankConfig& config);
inline Bank build_bank(const oracle::Oracle& oracle, std::span<const McqaTask> tasks, std::span<const Split> splits,
                       const PromptFormat& format, const BankConfig& config) {
  return build_bank(oracle, oracle, tasks, splits, format, config);
}

/// bank.jsonl, summary.json and errors.jsonl inside `dir`.
void write_bank(const Bank& bank, const std::filesystem::path& dir);
Bank read_bank(const std::filesystem::path& dir);
std::string record_to_json(const BankRecord& record);
BankRecord record_from_json(std::string_view line);
std::string summary_to_json(const BankSummary& summary);
std::string config_to_json(const BankConfig& config);
BankConfig config_from_json(std::string_view text);
/// Strict reader (unknown keys rejected) for a config object nested in a larger file.
BankConfig config_from_fields(const JsonFields& fields, BankConfig defaults);

struct PreferencePair {
  std::uint64_t record_id = 0;
  std::vector<TokenId> context;  // full explanation prompt
  std::vector<TokenId> chosen;
  std::vector<TokenId> rejected;
  std::size_t chosen_index = 0;
  std::size_t rejected_index = 0;
  double chosen_score = 0.0;
  double rejected_score = 0.0;
  double margin = 0.0;
  alignment::Metric metric = alignment::Metric::kCcSp;
};

struct PairSet {
  std::vector<PreferencePair> pairs;
  std::size_t skipped = 0;
};

/// Best vs worst among non-degenerate explanations (lowest index on ties).
/// Records with fewer than two such explanations or zero margin are skipped.
PairSet extract_pairs(std::span<const BankRecord> records, alignment::Metric metric);

}  // namespace selfcon::bank
