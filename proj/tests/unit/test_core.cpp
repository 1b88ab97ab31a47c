#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "selfcon/core/attribution_vector.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/core/mcqa.hpp"
#include "selfcon/core/numeric_text.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/core/skip_tokens.hpp"
#include "selfcon/core/vocabulary.hpp"
#include "selfcon/toylm/tasks.hpp"

using namespace selfcon;

namespace {

Vocabulary small_vocab() {
  return Vocabulary({"a", "b", "c", "d", "e", "f", "g", "<|eot_id|>", "h"});
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42, "attribution"), b(42, "attribution");
  for (int i = 0; i < 100000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42, "attribution"), d(42, "explanation");
  int same = 0;
  for (int i = 0; i < 1000; ++i) same += c.next_u64() == d.next_u64();
  CHECK(same == 0);

  // Splitting does not advance the parent.
  Rng p(7, "x");
  const auto before = p.counter();
  auto child = p.split(3);
  CHECK(p.counter() == before);
  CHECK(child.next_u64() == Rng(7, "x").split(3).next_u64());
  CHECK(p.split(3).next_u64() != p.split(4).next_u64());
}

TEST_CASE("rng draws have the expected moments") {
  Rng r(1, "moments");
  double su = 0.0, sn = 0.0, sn2 = 0.0;
  const int n = 200000;
  std::vector<int> bins(6, 0);
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    ++bins[r.below(6)];
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  for (int b : bins) CHECK(std::abs(b - n / 6.0) < 5 * std::sqrt(n / 6.0));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("resolve_skip_set") {
  const auto v = small_vocab();
  const auto s = resolve_skip_set({"<|eot_id|>"}, v);
  CHECK(s.ids == std::set<TokenId>{7});
  CHECK(s.unresolved.empty());
  CHECK(resolve_skip_set({}, v).ids.empty());

  const auto toy = resolve_skip_set(llama3_skip_literals(), toylm::toy_vocabulary());
  CHECK(toy.ids.empty());
  CHECK(toy.unresolved.size() == 6);
}

TEST_CASE("apply_skip_mask") {
  const auto v = small_vocab();
  SkipTokenSet s;
  s.ids = {7};
  auto seq = v.from_ids({5, 7, 5});
  CHECK(apply_skip_mask(seq, s).skip_mask() == std::vector<bool>{false, true, false});
  CHECK(apply_skip_mask(seq, SkipTokenSet{}).skip_mask() == std::vector<bool>{false, false, false});
  CHECK(apply_skip_mask(v.from_ids({7, 7}), s).skip_mask() == std::vector<bool>{true, true});
  CHECK(apply_skip_mask(seq, s).tokens()[1] == 7);
}

TEST_CASE("skip literal files") {
  const auto path = std::filesystem::path(SELFCON_SOURCE_DIR) / "configs" / "llama3_skip_tokens.txt";
  CHECK(load_skip_literals(path) == llama3_skip_literals());
  const auto toy = load_skip_literals(std::filesystem::path(SELFCON_SOURCE_DIR) / "configs" / "toy_skip_tokens.txt");
  CHECK(toy.count("<bos>") == 1);
  CHECK(resolve_skip_set(toy, toylm::toy_vocabulary()).unresolved.empty());
  CHECK_THROWS_AS(load_skip_literals("/nonexistent/skip.txt"), Error);
}

TEST_CASE("vocabulary encode and decode") {
  const auto v = small_vocab();
  const auto seq = v.encode("a  c <|eot_id|>");
  CHECK(std::vector<TokenId>(seq.tokens().begin(), seq.tokens().end()) == std::vector<TokenId>{0, 2, 7});
  CHECK(seq.pieces()[2] == "<|eot_id|>");
  CHECK(v.decode(seq.tokens()) == "a c <|eot_id|>");
  CHECK_THROWS_AS(v.encode("a zzz"), Error);
  CHECK_THROWS_AS(v.piece(99), Error);
}

TEST_CASE("token sequence concat keeps masks aligned") {
  const auto v = small_vocab();
  const auto a = v.from_ids({1, 2}).with_skip_mask({true, false});
  const auto b = v.from_ids({3});
  const auto c = a.concat(b);
  CHECK(c.size() == 3);
  CHECK(c.skip_mask() == std::vector<bool>{true, false, false});
  CHECK(c.unmasked_count() == 2);
  CHECK(c.prefix(2) == a);
  CHECK_THROWS_AS(a.with_skip_mask({true}), Error);
}

TEST_CASE("attribution vector invariants") {
  AttributionVector v;
  v.scores = {0.5, 0.0};
  v.skip_mask = {false, true};
  CHECK_NOTHROW(v.validate());
  v.scores[1] = 0.1;
  CHECK_THROWS_AS(v.validate(), Error);
  v.scores = {NAN, 0.0};
  CHECK_THROWS_AS(v.validate(), Error);
  for (auto m : {AttributionMethod::kLime, AttributionMethod::kLig, AttributionMethod::kExactShapley,
                 AttributionMethod::kKernelShap}) {
    CHECK(parse_attribution_method(to_string(m)) == m);
  }
}

TEST_CASE("numeric text") {
  CHECK(quantize(0.1234567891234, 9) == 0.123456789);
  CHECK(quantize(-12345.678901234, 5) == -12346.0);
  for (double x : {0.1, -3.5e-300, 1.0 / 3.0, 6.02214076e23}) CHECK(parse_decimal(exact_decimal(x)) == x);
  CHECK(percent_score(0.1234) == "12.34");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK_THROWS_AS(parse_decimal("1.5x"), Error);
}

TEST_CASE("largest remainder split sizes") {
  const std::vector<double> r = {0.7, 0.2, 0.1};
  CHECK(largest_remainder_sizes(100, r) == std::vector<std::size_t>{70, 20, 10});
  CHECK(largest_remainder_sizes(101, r) == std::vector<std::size_t>{71, 20, 10});
  CHECK(largest_remainder_sizes(0, r) == std::vector<std::size_t>{0, 0, 0});
  const std::vector<double> bad = {0.6, 0.2, 0.1};
  CHECK_THROWS_AS(largest_remainder_sizes(10, bad), Error);

  // Splits partition the items and stay within one of the exact ratio.
  for (std::size_t n : {7u, 13u, 58u, 999u}) {
    const auto s = assign_splits(n, r, Rng(3, "split"));
    REQUIRE(s.size() == n);
    std::array<std::size_t, 3> count{};
    for (auto x : s) ++count[static_cast<int>(x)];
    for (int i = 0; i < 3; ++i) CHECK(std::abs(static_cast<double>(count[i]) - r[i] * n) <= 1.0);
  }
}

TEST_CASE("decision and explanation prompts") {
  const auto& v = toylm::toy_vocabulary();
  const auto& tpl = toylm::toy_template();
  McqaTask t;
  t.question = {v.id("w0"), v.id("w1")};
  t.options = {{v.id("w20")}, {v.id("w21")}};
  const auto x = render_decision_prompt(t, tpl, v);
  CHECK(x[question_offset(tpl)] == v.id("w0"));
  const std::vector<TokenId> dec = {v.id("B"), v.id("w21")};
  const auto e = render_explanation_prompt(x, dec, tpl, v);
  CHECK(e.prefix(x.size()) == x);
  CHECK(parse_option_letter(dec, tpl, 2) == 1);
  CHECK_FALSE(parse_option_letter(std::vector<TokenId>{v.id("w21")}, tpl, 2).has_value());
  CHECK_FALSE(parse_option_letter(std::vector<TokenId>{v.id("C")}, tpl, 2).has_value());
}

TEST_CASE("strict json fields") {
  const auto j = parse_json(R"({"a": 1, "b": {"c": "x"}})", "test");
  JsonFields f(j, "root");
  CHECK_NOTHROW(f.allow_only({"a", "b"}));
  try {
    f.allow_only({"a"});
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("root.b") != std::string::npos);
  }
  int a = 0;
  f.read("a", a);
  CHECK(a == 1);
  std::string c;
  f.child("b").read("c", c);
  CHECK(c == "x");
  int wrong = 0;
  CHECK_THROWS_AS(f.child("b").read("c", wrong), Error);
  CHECK_THROWS_AS(parse_json("{", "test"), Error);
}

TEST_CASE("error kinds round trip") {
  for (auto k : {ErrorKind::kTransport, ErrorKind::kContextOverflow, ErrorKind::kValidation}) {
    CHECK(error_kind_from_string(to_string(k)) == k);
  }
  CHECK(error_kind_from_string("nonsense") == ErrorKind::kRefused);
}

}  // TEST_SUITE
