#include <doctest.h>

#include "fixtures.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/eval/eval.hpp"
#include "selfcon/toylm/tasks.hpp"

using namespace selfcon;
using namespace selfcon::eval;

namespace {

// Record with the given cc_sp scores (also copied to cc_cos); best and worst
// follow the lowest-index tie rule.
bank::BankRecord scored(std::uint64_t id, const std::vector<double>& scores, std::optional<int> option = 0,
                        bool correct = true) {
  bank::BankRecord r;
  r.id = id;
  r.x = toylm::toy_vocabulary().from_ids({1, 4, 20});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.explanations.push_back({static_cast<TokenId>(30 + i)});
    r.sp.scores.push_back({alignment::Metric::kCcSp, scores[i], 3, false});
    if (scores[i] > scores[r.sp.best]) r.sp.best = i;
    if (scores[i] < scores[r.sp.worst]) r.sp.worst = i;
  }
  r.cos = r.sp;
  r.decision.option = option;
  r.decision.correct = correct;
  return r;
}

bank::Bank bank_of(std::vector<bank::BankRecord> records) {
  bank::Bank b;
  b.oracle_id = "test";
  b.records = std::move(records);
  return b;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("correctness split") {
  const std::vector<bank::BankRecord> recs = {scored(1, {0.2, 0.2}), scored(2, {0.4, 0.4}),
                                              scored(3, {0.3, 0.3}, 1, false), scored(4, {0.9, 0.9}, std::nullopt, false)};
  const auto s = correctness_split(recs, alignment::Metric::kCcSp);
  REQUIRE(s.correct);
  REQUIRE(s.incorrect);
  REQUIRE(s.delta);
  CHECK(s.correct->n == 2);
  CHECK(s.incorrect->n == 1);  // the parse failure belongs to neither class
  CHECK(s.correct->mean == doctest::Approx(0.3));
  CHECK(s.delta->mean == doctest::Approx(0.0));

  const std::vector<bank::BankRecord> all = {scored(1, {0.1, 0.5}), scored(2, {0.2, 0.3})};
  const auto a = correctness_split(all, alignment::Metric::kCcSp);
  CHECK(a.correct);
  CHECK_FALSE(a.incorrect);
  CHECK_FALSE(a.delta);
  CHECK(a.correct->worst == doctest::Approx(0.15));
  CHECK(a.correct->best == doctest::Approx(0.4));
}

TEST_CASE("rank separation") {
  const std::vector<bank::BankRecord> recs = {scored(1, {0.1, 0.3, 0.2}), scored(2, {0.2, 0.1, 0.3})};
  const auto r = rank_separation(recs, alignment::Metric::kCcSp);
  REQUIRE(r.rank_means.size() == 3);
  CHECK(r.rank_means[0] == doctest::Approx(0.3));
  CHECK(r.rank_means[1] == doctest::Approx(0.2));
  CHECK(r.rank_means[2] == doctest::Approx(0.1));
  CHECK(r.spread == doctest::Approx(0.02 / 3));
  CHECK(r.by_rank[0].size() == 2);

  const std::vector<bank::BankRecord> flat = {scored(1, {0.4, 0.4, 0.4}), scored(2, {0.4, 0.4, 0.4})};
  CHECK(rank_separation(flat, alignment::Metric::kCcSp).spread == 0.0);
  CHECK(population_variance(std::vector<double>{}) == 0.0);
}

TEST_CASE("method agreement") {
  const auto a = bank_of({scored(1, {0.5, 0.4, 0.3, 0.2, 0.1}), scored(2, {0.1, 0.9, 0.3, 0.2, 0.0})});
  const auto same = method_agreement(a, a, alignment::Metric::kCcSp);
  CHECK(same.top1 == 1.0);
  CHECK(same.top3 == 1.0);
  CHECK(same.spearman == doctest::Approx(1.0));
  CHECK(same.rows.size() == 2);

  const std::vector<double> fwd = {5, 4, 3, 2, 1}, rev = {1, 2, 3, 4, 5};
  const auto row = agreement_row(fwd, rev);
  CHECK(row.top1 == 0.0);
  CHECK(row.top3 == doctest::Approx(1.0 / 3));
  CHECK(row.spearman == doctest::Approx(-1.0));

  const std::vector<double> flat = {1, 1, 1, 1, 1}, shorter = {1, 2};
  CHECK(agreement_row(flat, rev).degenerate);
  CHECK_THROWS_AS(agreement_row(shorter, rev), Error);
  auto b = a;
  b.records[1].explanations[0] = {99};
  try {
    method_agreement(a, b, alignment::Metric::kCcSp);
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMismatch);
  }
  b = a;
  b.records.pop_back();
  CHECK_THROWS_AS(method_agreement(a, b, alignment::Metric::kCcSp), Error);
}

TEST_CASE("relative delta and cross matrix") {
  CHECK(relative_delta(10.0, 11.3) == doctest::Approx(0.13));
  CHECK(relative_delta(-0.2, -0.1) == doctest::Approx(0.5));  // improvement stays positive
  CHECK_THROWS_AS(relative_delta(0.0, 1.0), Error);

  CrossMatrix m;
  m.cells.push_back({"-", "alpha", ModeLabel::kBB, {0, 0.20, 0}, 0.6});
  m.cells.push_back({"alpha", "alpha", ModeLabel::kTT, {0, 0.25, 0}, 0.6});
  m.cells.push_back({"-", "beta", ModeLabel::kBB, {0, 0.40, 0}, 0.5});
  m.cells.push_back({"alpha", "beta", ModeLabel::kTT, {0, 0.30, 0}, 0.5});
  CHECK(*delta_vs_bb(m, m.cells[1]) == doctest::Approx(0.25));
  CHECK(*delta_vs_bb(m, m.cells[3]) == doctest::Approx(-0.25));
  CHECK(*delta_vs_bb(m, m.cells[0]) == 0.0);
  const CrossCell orphan{"alpha", "gamma", ModeLabel::kTT, {}, 0.0};
  CHECK_FALSE(delta_vs_bb(m, orphan));
  const auto text = render_cross_matrix(m);
  CHECK(text.find("+25.0%") != std::string::npos);
  CHECK(text.find("-25.0%") != std::string::npos);
}

TEST_CASE("report table and ordering of worst, mean and best") {
  const auto bb = report_from_bank(ModeLabel::kBB, bank_of({scored(1, {0.1, 0.3}), scored(2, {0.2, 0.2})}));
  auto tt = report_from_bank(ModeLabel::kTT, bank_of({scored(1, {0.3, 0.2}), scored(2, {0.2, 0.3})}));
  tt.model = "dpo";
  for (const EvalReport* r : {&bb, static_cast<const EvalReport*>(&tt)}) {
    CHECK(r->summary.sp.worst <= r->summary.sp.mean);
    CHECK(r->summary.sp.mean <= r->summary.sp.best);
  }
  const std::vector<EvalReport> reports = {bb, tt};
  const auto table = render_report_table(reports, alignment::Metric::kCcSp);
  CHECK(table.find("TT dpo") != std::string::npos);
  CHECK(table.find("+25.0%") != std::string::npos);
  const auto j = report_to_json(tt);
  CHECK(j.find("\"correctness\"") != std::string::npos);
  CHECK(parse_mode("tt") == ModeLabel::kTT);
  CHECK_THROWS_AS(parse_mode("xx"), Error);
}

TEST_CASE("BB evaluation is reproducible") {
  const auto corpus = toylm::generate_task_corpus(2, 20, toylm::profile_by_name("alpha"));
  auto cfg = bank::toy_bank_config();
  cfg.lig.steps = 8;
  cfg.split.reset();
  const std::span<const McqaTask> tasks(corpus.tasks.data(), 4);
  const std::span<const Split> splits(corpus.splits.data(), 4);
  const EvalMode mode{ModeLabel::kBB, &fixtures::base_oracle(), &fixtures::base_oracle()};
  const auto a = run_mode(mode, tasks, splits, fixtures::toy_format(), cfg);
  const auto b = run_mode(mode, tasks, splits, fixtures::toy_format(), cfg);
  CHECK(a.records.size() == 4);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(a.summary.sp.worst <= a.summary.sp.mean);
  CHECK(a.summary.sp.mean <= a.summary.sp.best);
  CHECK_THROWS_AS(run_mode(EvalMode{}, tasks, splits, fixtures::toy_format(), cfg), Error);
}

}  // TEST_SUITE
