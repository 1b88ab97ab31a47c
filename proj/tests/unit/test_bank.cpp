#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "selfcon/bank/bank.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"
#include "selfcon/toylm/tasks.hpp"

using namespace selfcon;
using namespace selfcon::bank;

namespace {

BankConfig fast_config() {
  auto c = toy_bank_config();
  c.lig.steps = 8;
  c.split.reset();
  return c;
}

const toylm::TaskCorpus& corpus() {
  static const auto c = toylm::generate_task_corpus(1, 200, toylm::profile_by_name("alpha"));
  return c;
}

// Record whose cc_sp ranking carries the given scores.
BankRecord scored_record(std::uint64_t id, const std::vector<double>& scores) {
  BankRecord r;
  r.id = id;
  r.x = toylm::toy_vocabulary().from_ids({1, 4, 20});
  r.context = {9};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.explanations.push_back({static_cast<TokenId>(30 + i)});
    r.sp.scores.push_back({alignment::Metric::kCcSp, scores[i], 3, false});
  }
  r.cos = r.sp;
  return r;
}

}  // namespace

TEST_SUITE("bank") {

TEST_CASE("empty corpus gives an empty bank") {
  const auto b = build_bank(fixtures::base_oracle(), {}, {}, fixtures::toy_format(), fast_config());
  CHECK(b.records.empty());
  CHECK(b.errors.empty());
  const auto s = summarize(b.records, 0);
  CHECK(s.records == 0);
  CHECK(s.accuracy == 0.0);
}

TEST_CASE("one instance yields a decision and k explanation attributions") {
  const auto& c = corpus();
  const auto r = process_instance(fixtures::base_oracle(), fixtures::base_oracle(), c.tasks[0], c.splits[0],
                                  fixtures::toy_format(), fast_config());
  CHECK(r.explanations.size() == 5);
  CHECK(r.exp_attrs.size() == 5);
  CHECK(r.dec_attr.size() == r.x.size());
  for (const auto& v : r.exp_attrs) {
    CHECK(v.size() == r.x.size());
    CHECK(v.method == AttributionMethod::kLig);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (r.x.skip_mask()[i]) CHECK(v.scores[i] == 0.0);
    }
  }
  CHECK(r.x.skip_mask()[0]);  // <bos>
  CHECK(r.decision.correct == (r.decision.option && *r.decision.option == r.gold));

  // Stored alignment scores are reproducible from the stored vectors.
  const auto back = record_from_json(record_to_json(r));
  const auto again = alignment::score_explanations(back.dec_attr, back.exp_attrs, alignment::Metric::kCcSp);
  REQUIRE(again.scores.size() == back.sp.scores.size());
  for (std::size_t i = 0; i < again.scores.size(); ++i) CHECK(quantize(again.scores[i].value) == back.sp.scores[i].value);
  CHECK(again.best == back.sp.best);
  CHECK(again.worst == back.sp.worst);
  CHECK(record_to_json(back) == record_to_json(r));
}

TEST_CASE("explanation sampling is seeded and diverse") {
  const auto& c = corpus();
  const auto& fmt = fixtures::toy_format();
  auto cfg = fast_config();
  std::size_t distinct = 0, total = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    const auto x = apply_skip_mask(render_decision_prompt(c.tasks[t], *fmt.tpl, *fmt.vocab), fmt.skips);
    const auto d = elicit_decision(fixtures::base_oracle(), c.tasks[t], x, fmt, cfg.decision_max_tokens);
    const auto prompt = render_explanation_prompt(x, d.tokens, *fmt.tpl, *fmt.vocab);
    const auto e = sample_explanations(fixtures::base_oracle(), prompt.tokens(), cfg);
    REQUIRE(e.size() == 5);
    if (t < 3) CHECK(e == sample_explanations(fixtures::base_oracle(), prompt.tokens(), cfg));
    distinct += std::set<std::vector<TokenId>>(e.begin(), e.end()).size();
    total += e.size();
  }
  MESSAGE("distinct explanations: " << distinct << " / " << total);
  CHECK(static_cast<double>(distinct) / static_cast<double>(total) > 0.5);

  auto one = cfg;
  one.k = 1;
  one.explanation_seeds = {42};
  const auto x = apply_skip_mask(render_decision_prompt(c.tasks[0], *fmt.tpl, *fmt.vocab), fmt.skips);
  CHECK(sample_explanations(fixtures::base_oracle(), x.tokens(), one).size() == 1);
}

TEST_CASE("bank files are byte-identical across runs and thread counts") {
  const auto& c = corpus();
  auto cfg = fast_config();
  cfg.max_instances = 6;
  const std::span<const McqaTask> tasks(c.tasks.data(), 6);
  const std::span<const Split> splits(c.splits.data(), 6);
  const auto a = build_bank(fixtures::base_oracle(), tasks, splits, fixtures::toy_format(), cfg);
  cfg.threads = 3;
  const auto b = build_bank(fixtures::base_oracle(), tasks, splits, fixtures::toy_format(), cfg);
  REQUIRE(a.records.size() == 6);
  const auto da = fixtures::scratch("bank_a"), db = fixtures::scratch("bank_b");
  write_bank(a, da);
  cfg.threads = 1;
  auto b1 = b;
  b1.config_json = a.config_json;  // thread count is recorded in the header
  write_bank(b1, db);
  for (const char* f : {"bank.jsonl", "summary.json", "errors.jsonl"}) {
    CHECK(sha256_file(da / f) == sha256_file(db / f));
  }
  const auto back = read_bank(da);
  CHECK(back.records.size() == 6);
  CHECK(back.oracle_id == a.oracle_id);
  const auto dc = fixtures::scratch("bank_c");
  write_bank(back, dc);
  CHECK(read_file(dc / "bank.jsonl") == read_file(da / "bank.jsonl"));
}

TEST_CASE("summary aggregates and accuracy denominator") {
  std::vector<BankRecord> recs = {scored_record(1, {0.1, 0.5, 0.3}), scored_record(2, {-0.2, 0.4, 0.0}),
                                  scored_record(3, {0.9, 0.9, 0.6})};
  for (auto& r : recs) {
    r.sp = alignment::ExplanationRanking{r.sp.scores, 0, 0, 0};
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 0; i < r.sp.scores.size(); ++i) {
      if (r.sp.scores[i].value > r.sp.scores[best].value) best = i;
      if (r.sp.scores[i].value < r.sp.scores[worst].value) worst = i;
    }
    r.sp.best = best;
    r.sp.worst = worst;
    r.cos = r.sp;
  }
  recs[0].decision = {{14}, 0, true};
  recs[0].gold = 0;
  recs[1].decision = {{15}, 1, false};
  recs[2].decision = {{40}, std::nullopt, false};
  const auto s = summarize(recs, 2);
  CHECK(s.records == 3);
  CHECK(s.errors == 2);
  CHECK(s.parse_failures == 1);
  CHECK(s.correct == 1);
  CHECK(s.accuracy == doctest::Approx(0.5));
  CHECK(s.sp.worst == doctest::Approx((0.1 - 0.2 + 0.6) / 3));
  CHECK(s.sp.best == doctest::Approx((0.5 + 0.4 + 0.9) / 3));
  CHECK(s.sp.mean == doctest::Approx((0.3 + 0.2 / 3 + 0.8) / 3));
  CHECK(s.sp.worst <= s.sp.mean);
  CHECK(s.sp.mean <= s.sp.best);
  // SE = sample std / sqrt(N) of the per-record means.
  const double m1 = 0.3, m2 = 0.2 / 3, m3 = 0.8, mu = (m1 + m2 + m3) / 3;
  const double sd = std::sqrt(((m1 - mu) * (m1 - mu) + (m2 - mu) * (m2 - mu) + (m3 - mu) * (m3 - mu)) / 2);
  CHECK(s.sp.mean_se == doctest::Approx(sd / std::sqrt(3.0)));
}

TEST_CASE("extract_pairs picks arg-extrema with the lowest-index tie rule") {
  std::vector<BankRecord> recs = {scored_record(1, {0.1, 0.9, 0.4, 0.4, 0.2}),
                                  scored_record(2, {0.5, 0.5, 0.5, 0.5, 0.5}), scored_record(3, {0.3, 0.7}),
                                  scored_record(4, {0.8, 0.2, 0.8, 0.2})};
  recs.push_back(scored_record(5, {0.9, 0.1, 0.5}));
  recs.back().sp.scores[0].degenerate = true;
  const auto p = extract_pairs(recs, alignment::Metric::kCcSp);
  CHECK(p.skipped == 1);
  REQUIRE(p.pairs.size() == 4);
  CHECK(p.pairs.size() + p.skipped == recs.size());
  CHECK(p.pairs[0].chosen_index == 1);
  CHECK(p.pairs[0].rejected_index == 0);
  CHECK(p.pairs[0].margin == doctest::Approx(0.8));
  CHECK(p.pairs[0].chosen == recs[0].explanations[1]);
  CHECK(p.pairs[0].context == std::vector<TokenId>{1, 4, 20, 9});
  CHECK(p.pairs[1].chosen_index == 1);
  CHECK(p.pairs[1].rejected_index == 0);
  CHECK(p.pairs[2].chosen_index == 0);
  CHECK(p.pairs[2].rejected_index == 1);
  CHECK(p.pairs[3].chosen_index == 2);  // degenerate explanation 0 is ignored
  CHECK(p.pairs[3].rejected_index == 1);
  for (const auto& pair : p.pairs) CHECK(pair.chosen_score >= pair.rejected_score);
}

TEST_CASE("bank config validation and round trip") {
  auto c = toy_bank_config();
  c.k = 3;
  c.explanation_seeds = {1, 2, 3};
  c.split = Split::kValidation;
  c.lime.baseline = 5;
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.k == 3);
  CHECK(back.split == Split::kValidation);
  CHECK(back.lime.baseline == 5);

  // k alone implies seeds 42..42+k-1.
  const auto k2 = config_from_json(R"({"k": 2})");
  CHECK(k2.explanation_seeds == std::vector<std::uint64_t>{42, 43});

  auto bad = toy_bank_config();
  bad.split_ratios = {0.6, 0.2, 0.1};
  try {
    bad.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("split") != std::string::npos);
  }
  bad = toy_bank_config();
  bad.k = 4;
  CHECK_THROWS_AS(bad.validate(), Error);
  try {
    config_from_json(R"({"lime": {"samples": 5}})");
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bank.lime.samples") != std::string::npos);
  }
}

TEST_CASE("LIME bank method on the toy model") {
  const auto& c = corpus();
  auto cfg = fast_config();
  cfg.method = AttributionMethod::kLime;
  cfg.lime.n_samples = 64;
  cfg.k = 2;
  cfg.explanation_seeds = {42, 43};
  const auto r = process_instance(fixtures::base_oracle(), fixtures::base_oracle(), c.tasks[1], c.splits[1],
                                  fixtures::toy_format(), cfg);
  CHECK(r.dec_attr.method == AttributionMethod::kLime);
  CHECK(r.exp_attrs.size() == 2);
}

}  // TEST_SUITE
