#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selfcon/bank/bank.hpp"
#include "selfcon/eval/eval.hpp"
#include "selfcon/toylm/pretrain.hpp"
#include "selfcon/train/train.hpp"

namespace selfcon::cli {

enum class Profile { kToy, kReplication };
std::string_view to_string(Profile profile);
Profile parse_profile(std::string_view text);

bank::BankConfig default_bank_config(Profile profile);
train::TrainConfig default_train_config(Profile profile);

/// Output root: SELFCON_OUT_ROOT, when set, prefixes relative paths.
std::filesystem::path resolve_out(const std::filesystem::path& out);

struct CorpusStage {
  std::string source = "synthetic";  // or "external"
  std::string task = "alpha";
  std::size_t size = 5000;
  std::uint64_t seed = 1;
  std::vector<double> split = {0.7, 0.2, 0.1};
  std::uint64_t split_seed = 1;
  std::filesystem::path path;  // external datasets only
};

struct TrainStage {
  std::vector<std::string> objectives = {"dpo", "sft"};
  train::TrainConfig dpo;
  train::TrainConfig sft;
};

struct EvalStage {
  std::vector<eval::ModeLabel> modes = {eval::ModeLabel::kBB, eval::ModeLabel::kTT};
  Split split = Split::kTest;
  std::size_t max_instances = 0;
};

struct PipelineConfig {
  Profile profile = Profile::kToy;
  std::uint64_t seed = 42;
  std::filesystem::path out;
  std::filesystem::path model;  // base checkpoint
  std::filesystem::path skip_tokens;
  std::vector<std::string> stages = {"corpus", "bank", "train", "eval"};
  CorpusStage corpus;
  bank::BankConfig bank;
  TrainStage train;
  EvalStage eval;
};

/// Strict JSON reader: unknown keys and invalid values raise kValidation
/// naming the field. Relative paths resolve against `base_dir`; `seed`
/// fills every stage seed that the file leaves unset.
PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& config);

/// Canonical hash of the whole configuration.
std::string config_digest(const PipelineConfig& config);

struct StageOutcome {
  std::string name;
  bool skipped = false;
};

struct PipelineResult {
  std::filesystem::path out;
  std::vector<StageOutcome> stages;
  std::filesystem::path manifest;
};

using Log = std::function<void(const std::string&)>;

/// Runs the requested stages in order. A stage whose recorded input digest
/// and output digests still match is skipped.
PipelineResult run_pipeline(const PipelineConfig& config, const Log& log = {});

/// Base-model recipe for the toy profile.
struct PretrainRecipe {
  std::vector<std::string> tasks = {"alpha", "beta"};
  std::vector<std::uint64_t> corpus_seeds = {1, 2};
  std::size_t corpus_size = 5000;
  toylm::ToyConfig model;
  toylm::PretrainSchedule schedule;
};

PretrainRecipe toy_pretrain_recipe();
toylm::TaskCorpus merged_corpus(const PretrainRecipe& recipe);
toylm::ToyModelState pretrain_base(const PretrainRecipe& recipe, toylm::PretrainReport* report = nullptr,
                                   const toylm::PretrainLogger& log = {});

/// "toy:<checkpoint>" or a remote address understood by oracle::open_remote.
std::unique_ptr<oracle::Oracle> open_oracle(const std::string& spec);

bank::PromptFormat toy_prompt_format(const std::filesystem::path& skip_tokens);

/// Loads a corpus file, or an external dataset split by the bank config.
toylm::TaskCorpus load_any_corpus(const std::filesystem::path& path, const bank::BankConfig& config);

std::string train_report_json(const train::TrainReport& report, const std::string& objective,
                              std::size_t examples, const std::string& config_sha);
std::string train_log_jsonl(const train::TrainReport& report);

}  // namespace selfcon::cli
