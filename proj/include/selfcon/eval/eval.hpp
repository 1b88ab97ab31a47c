#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfcon/bank/bank.hpp"

namespace selfcon::eval {

enum class ModeLabel { kBB, kBT, kTT };
std::string_view to_string(ModeLabel mode);
ModeLabel parse_mode(std::string_view text);

struct EvalMode {
  ModeLabel label = ModeLabel::kBB;
  const oracle::Oracle* decider = nullptr;
  const oracle::Oracle* explainer = nullptr;
};

struct EvalReport {
  ModeLabel mode = ModeLabel::kBB;
  std::string model;       // name of the tuned model, empty for BB
  std::string provenance;  // oracle ids and config
  bank::BankSummary summary;
  double degenerate_rate_sp = 0.0;
  double degenerate_rate_cos = 0.0;
  std::vector<bank::BankRecord> records;
  std::vector<bank::RecordError> errors;
};

/// Regenerates decisions, explanations and attributions on the held-out
/// instances with the mode's decider and explainer.
EvalReport run_mode(const EvalMode& mode, std::span<const McqaTask> tasks, std::span<const Split> splits,
                    const bank::PromptFormat& format, const bank::BankConfig& config);
/// Report over an existing bank (its records are the detail rows).
EvalReport report_from_bank(ModeLabel mode, const bank::Bank& bank);

struct ClassStat {
  std::size_t n = 0;
  double worst = 0.0, mean = 0.0, best = 0.0;
};
struct CorrectnessSplit {
  std::optional<ClassStat> correct;
  std::optional<ClassStat> incorrect;
  /// T - F for worst/mean/best; absent when either class is empty.
  std::optional<ClassStat> delta;
};
/// Parse-failed decisions belong to neither class.
CorrectnessSplit correctness_split(std::span<const bank::BankRecord> records, alignment::Metric metric);

struct RankSeparation {
  std::vector<std::vector<double>> by_rank;  // rank 0 = highest score in each record
  std::vector<double> rank_means;
  double spread = 0.0;  // population variance of rank_means
};
RankSeparation rank_separation(std::span<const bank::BankRecord> records, alignment::Metric metric);
double population_variance(std::span<const double> values);

struct AgreementRow {
  std::uint64_t id = 0;
  double top1 = 0.0;
  double top3 = 0.0;
  double spearman = 0.0;
  bool degenerate = false;
};
struct MethodAgreement {
  std::vector<AgreementRow> rows;
  double top1 = 0.0;
  double top3 = 0.0;
  double spearman = 0.0;  // over non-degenerate rows
  std::size_t degenerate = 0;
};
/// Per-record agreement between two score lists over the same explanations.
AgreementRow agreement_row(std::span<const double> a, std::span<const double> b);
/// Banks must cover identical instances and explanations (kMismatch otherwise).
MethodAgreement method_agreement(const bank::Bank& a, const bank::Bank& b, alignment::Metric metric);

/// (TT - BB) / |BB|, on raw values.
double relative_delta(double baseline, double value);

struct CrossCell {
  std::string source;  // training domain ("-" for the base model)
  std::string target;  // evaluation domain
  ModeLabel mode = ModeLabel::kBB;
  bank::AggregateStat stat;
  double accuracy = 0.0;
};
struct CrossMatrix {
  alignment::Metric metric = alignment::Metric::kCcSp;
  std::vector<CrossCell> cells;
};
/// Percentage change of each cell's mean against the BB cell of the same target.
std::optional<double> delta_vs_bb(const CrossMatrix& matrix, const CrossCell& cell);

std::string render_report_table(std::span<const EvalReport> reports, alignment::Metric metric);
std::string render_cross_matrix(const CrossMatrix& matrix);
std::string report_to_json(const EvalReport& report);
std::string rank_separation_to_json(const RankSeparation& sp, const RankSeparation& cos);
std::string agreement_to_json(const MethodAgreement& agreement);

}  // namespace selfcon::eval
