#include "selfcon/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::eval {

using nlohmann::json;

std::string_view to_string(ModeLabel mode) {
  switch (mode) {
    case ModeLabel::kBB: return "BB";
    case ModeLabel::kBT: return "BT";
    case ModeLabel::kTT: return "TT";
  }
  return "?";
}

ModeLabel parse_mode(std::string_view text) {
  if (text == "bb" || text == "BB") return ModeLabel::kBB;
  if (text == "bt" || text == "BT") return ModeLabel::kBT;
  if (text == "tt" || text == "TT") return ModeLabel::kTT;
  fail(ErrorKind::kInvalidArgument, "unknown eval mode '" + std::string(text) + "'");
}

EvalReport report_from_bank(ModeLabel mode, const bank::Bank& b) {
  EvalReport r;
  r.mode = mode;
  r.provenance = b.oracle_id;
  r.records = b.records;
  r.errors = b.errors;
  r.summary = bank::summarize(r.records, r.errors.size());
  std::size_t total = 0;
  for (const auto& rec : r.records) total += rec.explanations.size();
  if (total > 0) {
    r.degenerate_rate_sp = static_cast<double>(r.summary.degenerate_sp) / static_cast<double>(total);
    r.degenerate_rate_cos = static_cast<double>(r.summary.degenerate_cos) / static_cast<double>(total);
  }
  return r;
}

EvalReport run_mode(const EvalMode& mode, std::span<const McqaTask> tasks, std::span<const Split> splits,
                    const bank::PromptFormat& format, const bank::BankConfig& config) {
  if (!mode.decider || !mode.explainer) fail(ErrorKind::kInvalidArgument, "run_mode: oracles not set");
  const auto b = bank::build_bank(*mode.decider, *mode.explainer, tasks, splits, format, config);
  return report_from_bank(mode.label, b);
}

CorrectnessSplit correctness_split(std::span<const bank::BankRecord> records, alignment::Metric metric) {
  ClassStat t, f;
  for (const auto& r : records) {
    if (!r.decision.option) continue;
    const auto& rk = r.ranking(metric);
    double mean = 0.0;
    for (const auto& s : rk.scores) mean += s.value;
    mean /= static_cast<double>(rk.scores.size());
    ClassStat& c = r.decision.correct ? t : f;
    ++c.n;
    c.worst += rk.scores[rk.worst].value;
    c.mean += mean;
    c.best += rk.scores[rk.best].value;
  }
  CorrectnessSplit out;
  auto finish = [](ClassStat c) -> std::optional<ClassStat> {
    if (c.n == 0) return std::nullopt;
    const double n = static_cast<double>(c.n);
    c.worst /= n;
    c.mean /= n;
    c.best /= n;
    return c;
  };
  out.correct = finish(t);
  out.incorrect = finish(f);
  if (out.correct && out.incorrect) {
    out.delta = ClassStat{0, out.correct->worst - out.incorrect->worst, out.correct->mean - out.incorrect->mean,
                          out.correct->best - out.incorrect->best};
  }
  return out;
}

double population_variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0.0;  // the summed mean need not round back to the common value
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size());
}

RankSeparation rank_separation(std::span<const bank::BankRecord> records, alignment::Metric metric) {
  RankSeparation out;
  for (const auto& r : records) {
    std::vector<double> v;
    for (const auto& s : r.ranking(metric).scores) v.push_back(s.value);
    std::sort(v.begin(), v.end(), std::greater<>());
    if (out.by_rank.size() < v.size()) out.by_rank.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.by_rank[i].push_back(v[i]);
  }
  for (const auto& col : out.by_rank) {
    out.rank_means.push_back(std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size()));
  }
  out.spread = population_variance(out.rank_means);
  return out;
}

AgreementRow agreement_row(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) fail(ErrorKind::kMismatch, "agreement: score lists differ in length");
  auto order = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] > v[y]; });
    return idx;
  };
  const auto oa = order(a), ob = order(b);
  AgreementRow row;
  row.top1 = oa[0] == ob[0] ? 1.0 : 0.0;
  const std::size_t top = std::min<std::size_t>(3, a.size());
  std::size_t shared = 0;
  for (std::size_t i = 0; i < top; ++i) {
    shared += std::find(ob.begin(), ob.begin() + static_cast<std::ptrdiff_t>(top), oa[i]) !=
              ob.begin() + static_cast<std::ptrdiff_t>(top);
  }
  row.top3 = static_cast<double>(shared) / static_cast<double>(top);
  AttributionVector va, vb;
  va.scores.assign(a.begin(), a.end());
  vb.scores.assign(b.begin(), b.end());
  va.skip_mask.assign(a.size(), false);
  vb.skip_mask = va.skip_mask;
  if (a.size() >= 2) {
    const auto s = alignment::cc_sp(va, vb);
    row.spearman = s.value;
    row.degenerate = s.degenerate;
  } else {
    row.degenerate = true;
  }
  return row;
}

MethodAgreement method_agreement(const bank::Bank& a, const bank::Bank& b, alignment::Metric metric) {
  if (a.records.size() != b.records.size()) fail(ErrorKind::kMismatch, "agreement: banks differ in record count");
  MethodAgreement out;
  double sp_total = 0.0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.id != rb.id || ra.explanations != rb.explanations) {
      fail(ErrorKind::kMismatch, "agreement: record " + std::to_string(ra.id) + " differs between banks");
    }
    std::vector<double> sa, sb;
    for (const auto& s : ra.ranking(metric).scores) sa.push_back(s.value);
    for (const auto& s : rb.ranking(metric).scores) sb.push_back(s.value);
    auto row = agreement_row(sa, sb);
    row.id = ra.id;
    out.top1 += row.top1;
    out.top3 += row.top3;
    if (row.degenerate) {
      ++out.degenerate;
    } else {
      sp_total += row.spearman;
    }
    out.rows.push_back(row);
  }
  if (!out.rows.empty()) {
    out.top1 /= static_cast<double>(out.rows.size());
    out.top3 /= static_cast<double>(out.rows.size());
  }
  const std::size_t valid = out.rows.size() - out.degenerate;
  out.spearman = valid == 0 ? 0.0 : sp_total / static_cast<double>(valid);
  return out;
}

double relative_delta(double baseline, double value) {
  if (baseline == 0.0) fail(ErrorKind::kDegenerate, "relative delta against a zero baseline");
  return (value - baseline) / std::abs(baseline);
}

std::optional<double> delta_vs_bb(const CrossMatrix& matrix, const CrossCell& cell) {
  for (const auto& c : matrix.cells) {
    if (c.target == cell.target && c.mode == ModeLabel::kBB && c.stat.mean != 0.0) {
      return relative_delta(c.stat.mean, cell.stat.mean);
    }
  }
  return std::nullopt;
}

namespace {

std::string signed_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", fraction * 100.0);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

json class_json(const std::optional<ClassStat>& c) {
  if (!c) return nullptr;
  return {{"n", c->n}, {"worst", quantize(c->worst)}, {"mean", quantize(c->mean)}, {"best", quantize(c->best)}};
}

}  // namespace

std::string render_report_table(std::span<const EvalReport> reports, alignment::Metric metric) {
  std::string out = "metric " + std::string(alignment::to_string(metric)) + " (x100)\n";
  out += "mode           Acc    Worst     Mean     Best    dMean\n";
  std::optional<double> bb;
  for (const auto& r : reports) {
    if (r.mode == ModeLabel::kBB) bb = (metric == alignment::Metric::kCcSp ? r.summary.sp : r.summary.cos).mean;
  }
  for (const auto& r : reports) {
    const auto& s = metric == alignment::Metric::kCcSp ? r.summary.sp : r.summary.cos;
    std::string line = std::string(to_string(r.mode)) + (r.model.empty() ? "" : " " + r.model);
    line.resize(std::max<std::size_t>(line.size(), 9), ' ');
    line += pad(percent_score(r.summary.accuracy), 9);
    line += pad(percent_score(s.worst), 9) + pad(percent_score(s.mean), 9) + pad(percent_score(s.best), 9);
    line += pad(bb && *bb != 0.0 ? signed_percent(relative_delta(*bb, s.mean)) : std::string("-"), 9);
    out += line + "\n";
  }
  return out;
}

std::string render_cross_matrix(const CrossMatrix& matrix) {
  std::string out = "metric " + std::string(alignment::to_string(matrix.metric)) + " (x100)\n";
  out += "train     eval      mode    Worst     Mean     Best    dMean\n";
  for (const auto& c : matrix.cells) {
    std::string line = c.source;
    line.resize(10, ' ');
    std::string target = c.target;
    target.resize(10, ' ');
    line += target + std::string(to_string(c.mode)) + "  ";
    line += pad(percent_score(c.stat.worst), 9) + pad(percent_score(c.stat.mean), 9) + pad(percent_score(c.stat.best), 9);
    const auto d = delta_vs_bb(matrix, c);
    line += pad(d ? signed_percent(*d) : std::string("-"), 9);
    out += line + "\n";
  }
  return out;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["mode"] = to_string(r.mode);
  j["model"] = r.model;
  j["provenance"] = r.provenance;
  j["summary"] = json::parse(bank::summary_to_json(r.summary));
  j["degenerate_rate"] = {{"cc_sp", quantize(r.degenerate_rate_sp)}, {"cc_cos", quantize(r.degenerate_rate_cos)}};
  for (auto metric : {alignment::Metric::kCcSp, alignment::Metric::kCcCos}) {
    const auto split = correctness_split(r.records, metric);
    j["correctness"][std::string(alignment::to_string(metric))] = {
        {"T", class_json(split.correct)}, {"F", class_json(split.incorrect)}, {"delta", class_json(split.delta)}};
  }
  json rows = json::array();
  for (const auto& rec : r.records) {
    json row = {{"id", rec.id}, {"correct", rec.decision.correct}, {"parsed", rec.decision.option.has_value()}};
    for (auto metric : {alignment::Metric::kCcSp, alignment::Metric::kCcCos}) {
      std::vector<double> v;
      for (const auto& s : rec.ranking(metric).scores) v.push_back(quantize(s.value));
      row[std::string(alignment::to_string(metric))] = v;
    }
    rows.push_back(row);
  }
  j["records"] = rows;
  return j.dump(1) + "\n";
}

std::string rank_separation_to_json(const RankSeparation& sp, const RankSeparation& cos) {
  auto one = [](const RankSeparation& r) {
    std::vector<double> means;
    for (double m : r.rank_means) means.push_back(quantize(m));
    return json{{"rank_means", means}, {"spread", quantize(r.spread)}};
  };
  return json{{"cc_sp", one(sp)}, {"cc_cos", one(cos)}}.dump(2) + "\n";
}

std::string agreement_to_json(const MethodAgreement& a) {
  json rows = json::array();
  for (const auto& r : a.rows) {
    rows.push_back({{"id", r.id}, {"top1", r.top1}, {"top3", quantize(r.top3)}, {"spearman", quantize(r.spearman)},
                    {"degenerate", r.degenerate}});
  }
  return json{{"top1", quantize(a.top1)},
              {"top3", quantize(a.top3)},
              {"spearman", quantize(a.spearman)},
              {"degenerate", a.degenerate},
              {"rows", rows}}
             .dump(1) +
         "\n";
}

}  // namespace selfcon::eval
