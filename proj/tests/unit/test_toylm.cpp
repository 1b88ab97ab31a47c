#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "reference_model.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/toylm/checkpoint.hpp"
#include "selfcon/toylm/forward.hpp"
#include "selfcon/toylm/optim.hpp"
#include "selfcon/toylm/tasks.hpp"

using namespace selfcon;
using namespace selfcon::toylm;

namespace {

ToyConfig small_config() {
  ToyConfig c;
  c.width = 16;
  c.heads = 2;
  c.context = 24;
  c.mlp_hidden = 24;
  return c;
}

// Random model with an adapter whose B factors are non-zero, so both halves
// of every adapted projection are exercised.
ToyModelState random_model(std::uint64_t seed, bool with_adapter) {
  Rng rng(seed, "init");
  auto s = init_model(small_config(), rng);
  if (with_adapter) {
    attach_adapter(s, 4, 8.0, rng);
    Rng b(seed, "lora_b");
    for (const auto& e : s.adapter->layout.entries()) {
      if (!e.name.ends_with(".lora_b")) continue;
      for (std::size_t i = 0; i < e.size(); ++i) s.adapter->params[e.offset + i] = 0.1 * b.normal();
    }
  }
  return s;
}

std::vector<TokenId> random_ids(Rng& rng, int n) {
  std::vector<TokenId> ids(n);
  for (auto& t : ids) t = static_cast<TokenId>(rng.below(128));
  return ids;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_SUITE("toylm") {

TEST_CASE("forward pass matches the plain-loop reference") {
  for (bool adapter : {false, true}) {
    const auto s = random_model(3, adapter);
    Rng rng(5, "ids");
    for (int trial = 0; trial < 4; ++trial) {
      const auto prompt = random_ids(rng, 3 + trial * 3);
      const auto cont = random_ids(rng, 1 + trial);
      const auto got = forward_slp(s, prompt, cont);
      const double want = reftest::reference_slp(s, prompt, cont);
      CHECK(got.slp == doctest::Approx(want).epsilon(1e-11));
      double sum = 0.0;
      for (double v : got.per_token_logprob) sum += v;
      CHECK(sum == doctest::Approx(got.slp).epsilon(1e-12));
    }
  }
}

TEST_CASE("next-token distribution matches the reference last row") {
  const auto s = random_model(11, true);
  Rng rng(2, "ids");
  const auto ids = random_ids(rng, 9);
  const auto got = next_token_logprobs(s, ids);
  const auto ref = reftest::forward_logprobs(s, ids);
  REQUIRE(got.size() == 128);
  double mass = 0.0;
  for (std::size_t v = 0; v < got.size(); ++v) {
    CHECK(got[v] == doctest::Approx(ref.back()[v]).epsilon(1e-11));
    mass += std::exp(got[v]);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fresh adapter is an identity and merging preserves outputs") {
  auto s = random_model(4, false);
  Rng rng(9, "ids");
  const auto prompt = random_ids(rng, 8);
  const auto cont = random_ids(rng, 3);
  const double before = forward_slp(s, prompt, cont).slp;
  Rng ar(1, "adapter");
  attach_adapter(s, 8, 16.0, ar);
  CHECK(forward_slp(s, prompt, cont).slp == before);

  const auto tuned = random_model(4, true);
  const auto merged = merge_adapter(tuned);
  CHECK_FALSE(merged.adapter.has_value());
  CHECK(forward_slp(merged, prompt, cont).slp == doctest::Approx(forward_slp(tuned, prompt, cont).slp).epsilon(1e-11));
  CHECK(forward_slp(tuned, prompt, cont, false).slp == forward_slp(without_adapter(tuned), prompt, cont).slp);
}

TEST_CASE("init scales follow the layer recipe") {
  Rng rng(1, "init");
  const auto s = init_model(ToyConfig{}, rng);
  auto stdev = [&](const std::string& name) {
    const auto p = s.param(name);
    double ss = 0.0;
    for (double v : p) ss += v * v;
    return std::sqrt(ss / p.size());
  };
  CHECK(stdev("tok_emb") == doctest::Approx(0.5).epsilon(0.05));
  CHECK(stdev("out") == doctest::Approx(0.02).epsilon(0.05));
  CHECK(stdev("l0.q") == doctest::Approx(1.0 / 8.0).epsilon(0.05));
  CHECK(stdev("l1.o") == doctest::Approx(1.0 / 8.0 / 2.0).epsilon(0.05));
  for (double g : s.param("final_norm")) CHECK(g == 1.0);
}

TEST_CASE("embedding gradient matches central differences") {
  const auto s = random_model(21, true);
  Rng rng(8, "ids");
  const auto prompt = random_ids(rng, 7);
  const auto cont = random_ids(rng, 3);
  const auto emb = token_embeddings(s, prompt);
  const auto g = grad_slp_wrt_embeddings(s, prompt, cont, emb);
  REQUIRE(g.grad.size() == emb.size());
  CHECK(g.slp == doctest::Approx(forward_slp(s, prompt, cont).slp).epsilon(1e-12));
  const double h = 1e-5;
  Rng pick(8, "coords");
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = pick.below(emb.size());
    auto up = emb, dn = emb;
    up[i] += h;
    dn[i] -= h;
    const double fd = (grad_slp_wrt_embeddings(s, prompt, cont, up).slp -
                       grad_slp_wrt_embeddings(s, prompt, cont, dn).slp) / (2 * h);
    CHECK(rel_err(fd, g.grad[i]) < 1e-5);
  }
}

TEST_CASE("adapter and base parameter gradients match central differences") {
  auto s = random_model(31, true);
  Rng rng(6, "ids");
  const auto prompt = random_ids(rng, 6);
  const auto cont = random_ids(rng, 2);
  const double h = 1e-5;
  Rng pick(6, "coords");

  const auto ga = grad_slp_wrt_params(s, prompt, cont, GradScope::kAdapter);
  REQUIRE(ga.size() == s.adapter->params.size());
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = pick.below(ga.size());
    const double keep = s.adapter->params[i];
    s.adapter->params[i] = keep + h;
    const double up = forward_slp(s, prompt, cont).slp;
    s.adapter->params[i] = keep - h;
    const double dn = forward_slp(s, prompt, cont).slp;
    s.adapter->params[i] = keep;
    CHECK(rel_err((up - dn) / (2 * h), ga[i]) < 1e-5);
  }

  s.adapter.reset();
  const auto gb = grad_slp_wrt_params(s, prompt, cont, GradScope::kBase);
  REQUIRE(gb.size() == s.base.size());
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = pick.below(gb.size());
    const double keep = s.base[i];
    s.base[i] = keep + h;
    const double up = forward_slp(s, prompt, cont).slp;
    s.base[i] = keep - h;
    const double dn = forward_slp(s, prompt, cont).slp;
    s.base[i] = keep;
    const double fd = (up - dn) / (2 * h);
    if (std::abs(fd) < 1e-9 && std::abs(gb[i]) < 1e-9) continue;  // unused embedding rows
    CHECK(rel_err(fd, gb[i]) < 1e-5);
  }
}

TEST_CASE("batched embedding gradients equal single calls") {
  const auto s = random_model(41, false);
  Rng rng(1, "ids");
  const auto prompt = random_ids(rng, 5);
  const auto cont = random_ids(rng, 2);
  const auto emb = token_embeddings(s, prompt);
  std::vector<std::vector<double>> points;
  for (double a : {0.0, 0.5, 1.0}) {
    auto e = emb;
    for (double& v : e) v *= a;
    points.push_back(e);
  }
  const auto batch = grad_slp_wrt_embeddings_batch(s, prompt, cont, points);
  REQUIRE(batch.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto one = grad_slp_wrt_embeddings(s, prompt, cont, points[i]);
    CHECK(batch[i].slp == doctest::Approx(one.slp).epsilon(1e-12));
    for (std::size_t j = 0; j < one.grad.size(); ++j) CHECK(batch[i].grad[j] == doctest::Approx(one.grad[j]).epsilon(1e-10));
  }
}

TEST_CASE("context overflow is rejected") {
  const auto s = random_model(1, false);
  std::vector<TokenId> prompt(20, 5), cont(10, 6);
  CHECK_THROWS_AS(forward_slp(s, prompt, cont), Error);
}

TEST_CASE("checkpoint round trip is exact") {
  const auto s = random_model(51, true);
  const auto dir = std::filesystem::temp_directory_path() / "selfcon_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(s, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.config == s.config);
  CHECK(back.base == s.base);
  REQUIRE(back.adapter.has_value());
  CHECK(back.adapter->params == s.adapter->params);
  CHECK(back.adapter->rank == s.adapter->rank);
  save_checkpoint(back, dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  write_file(dir / "bad.ckpt", "not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("AdamW first step moves each coordinate by about lr") {
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {0.3, -0.1, 0.0};
  AdamW opt(p.size(), AdamWConfig{.lr = 0.1, .grad_clip = 0.0});
  const double norm = opt.step(p, g);
  CHECK(norm == doctest::Approx(std::sqrt(0.1)));
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p[2] == 0.5);

  std::vector<double> q = {1.0};
  AdamW decay(1, AdamWConfig{.lr = 0.1, .weight_decay = 0.5, .grad_clip = 0.0});
  decay.step(q, std::vector<double>{0.0});
  CHECK(q[0] == doctest::Approx(1.0 - 0.1 * 0.5));
}

TEST_CASE("toy vocabulary layout") {
  const auto& v = toy_vocabulary();
  CHECK(v.size() == 128);
  CHECK(v.piece(tok::kPad) == "<pad>");
  CHECK(v.piece(tok::kBos) == "<bos>");
  CHECK(v.piece(tok::kEos) == "<eos>");
  CHECK(v.piece(tok::kNewline) == "<nl>");
  CHECK(v.piece(tok::kArrow) == "->");
  CHECK(v.piece(tok::kBecause) == "because");
  CHECK(v.id("A") == 14);
  CHECK(v.id("E") == 18);
  CHECK(v.piece(tok::kFirstWord) == "w0");
  CHECK(v.piece(127) == "w108");
}

TEST_CASE("synthetic corpus is deterministic and split by largest remainder") {
  const auto prof = profile_by_name("alpha");
  const auto a = generate_task_corpus(1, 1000, prof);
  const auto b = generate_task_corpus(1, 1000, prof);
  REQUIRE(a.tasks.size() == 1000);
  CHECK(a.splits == b.splits);
  std::map<Split, std::size_t> n;
  for (auto s : a.splits) ++n[s];
  CHECK(n[Split::kTrain] == 700);
  CHECK(n[Split::kValidation] == 200);
  CHECK(n[Split::kTest] == 100);
  for (std::size_t i = 0; i < a.tasks.size(); ++i) {
    CHECK(a.tasks[i].question == b.tasks[i].question);
    const int key = key_index(a.tasks[i], prof);
    REQUIRE(key >= 0);
    // The gold option carries the mapped answer of the key token.
    const auto& gold = a.tasks[i].options[a.tasks[i].gold];
    CHECK(std::find(gold.begin(), gold.end(), prof.answer_token(prof.gold_answer(key))) != gold.end());
    REQUIRE(a.tasks[i].key_positions.size() == 1);
    CHECK(a.tasks[i].question[a.tasks[i].key_positions[0]] == prof.key_token(key));
  }
  const auto c = generate_task_corpus(2, 1000, prof);
  CHECK(c.tasks[0].question != a.tasks[0].question);

  const std::vector<double> ratios = {0.5, 0.5, 0.0};
  const auto d = generate_task_corpus(1, 10, prof, ratios, 3);
  std::size_t train = 0;
  for (auto s : d.splits) train += s == Split::kTrain;
  CHECK(train == 5);
  CHECK(d.tasks[3].question == generate_task_corpus(1, 10, prof).tasks[3].question);
}

TEST_CASE("corpus file round trip") {
  const auto corpus = generate_task_corpus(4, 50, profile_by_name("beta"));
  const auto path = std::filesystem::temp_directory_path() / "selfcon_corpus_test.jsonl";
  save_corpus(corpus, path);
  const auto back = load_corpus(path);
  CHECK(back.profile == corpus.profile);
  CHECK(back.splits == corpus.splits);
  REQUIRE(back.tasks.size() == corpus.tasks.size());
  for (std::size_t i = 0; i < back.tasks.size(); ++i) {
    CHECK(back.tasks[i].question == corpus.tasks[i].question);
    CHECK(back.tasks[i].options == corpus.tasks[i].options);
    CHECK(back.tasks[i].gold == corpus.tasks[i].gold);
  }
  std::filesystem::remove(path);
}

}  // TEST_SUITE
