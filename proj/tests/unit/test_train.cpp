#include <doctest.h>

#include <cmath>

#include "selfcon/core/error.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/core/rng.hpp"
#include "selfcon/toylm/forward.hpp"
#include "selfcon/toylm/pretrain.hpp"
#include "selfcon/toylm/tasks.hpp"
#include "selfcon/train/train.hpp"

using namespace selfcon;
using namespace selfcon::train;

namespace {

toylm::ToyModelState small_model(std::uint64_t seed) {
  toylm::ToyConfig c;
  c.width = 16;
  c.context = 40;
  c.mlp_hidden = 24;
  Rng rng(seed, "init");
  auto s = toylm::init_model(c, rng);
  // The output projection is not adapted; at its init scale of 0.02 it caps
  // the logit range an adapter can reach, so widen it for these fits.
  for (double& w : s.param("out")) w *= 50.0;
  return s;
}

std::vector<bank::PreferencePair> synthetic_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, "pairs");
  std::vector<bank::PreferencePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    bank::PreferencePair p;
    p.record_id = i;
    p.context = {1, 4, static_cast<TokenId>(20 + rng.below(40)), static_cast<TokenId>(20 + rng.below(40)), 9};
    for (int t = 0; t < 4; ++t) {
      p.chosen.push_back(static_cast<TokenId>(60 + rng.below(30)));
      p.rejected.push_back(static_cast<TokenId>(90 + rng.below(30)));
    }
    out.push_back(std::move(p));
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig c = toy_train_config();
  c.epochs = 3;
  c.batch_size = 4;
  c.lora_rank = 4;
  c.lora_alpha = 8.0;
  return c;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("dpo_loss values") {
  const auto zero = dpo_loss(-3.0, -5.0, -3.0, -5.0, 0.5);
  CHECK(zero.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(zero.margin == 0.0);
  const auto l = dpo_loss(2.0, -1.0, 0.0, 0.0, 1.0);
  CHECK(l.margin == doctest::Approx(3.0));
  CHECK(l.loss == doctest::Approx(0.048587).epsilon(1e-5));
  CHECK(dpo_loss(1000.0, 0.0, 0.0, 0.0, 1.0).loss < 1e-300);
  CHECK(std::isfinite(dpo_loss(-1000.0, 0.0, 0.0, 0.0, 1.0).loss));

  Rng rng(1, "m");
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200; ++i) {
    const double m = -10.0 + 0.1 * i;
    const double loss = dpo_loss(m, 0.0, 0.0, 0.0, 0.7).loss;
    CHECK(loss < prev);
    prev = loss;
    const double r = 4.0 * rng.normal();
    const double beta = 0.1 + rng.uniform();
    CHECK(dpo_loss(r, 0, 0, 0, beta).loss - dpo_loss(-r, 0, 0, 0, beta).loss == doctest::Approx(-beta * r).epsilon(1e-9));
  }
}

TEST_CASE("DPO objective gradient matches central differences") {
  auto s = small_model(2);
  Rng ar(2, "adapter");
  toylm::attach_adapter(s, 4, 8.0, ar);
  Rng br(3, "b");
  for (const auto& e : s.adapter->layout.entries()) {
    if (!e.name.ends_with(".lora_b")) continue;
    for (std::size_t i = 0; i < e.size(); ++i) s.adapter->params[e.offset + i] = 0.05 * br.normal();
  }
  const auto pairs = synthetic_pairs(3, 4);
  auto cfg = quick_config();
  const auto seqs = prepare_pairs(pairs, cfg, toylm::tok::kEos);
  CHECK(seqs[0].chosen.back() == toylm::tok::kEos);
  const auto ref = reference_slps(s, seqs);
  const auto obj = dpo_objective(s, seqs, ref, 0.5);
  Rng pick(5, "coords");
  const double h = 1e-5;
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = pick.below(obj.grad.size());
    const double keep = s.adapter->params[i];
    s.adapter->params[i] = keep + h;
    const double up = dpo_objective(s, seqs, ref, 0.5).loss;
    s.adapter->params[i] = keep - h;
    const double dn = dpo_objective(s, seqs, ref, 0.5).loss;
    s.adapter->params[i] = keep;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - obj.grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("zero-step training is an exact identity") {
  const auto base = small_model(3);
  const auto pairs = synthetic_pairs(4, 1);
  auto cfg = quick_config();
  cfg.epochs = 0;
  auto s = base;
  const auto report = train_dpo(s, pairs, cfg);
  CHECK(report.optimizer_steps == 0);
  REQUIRE(s.adapter.has_value());
  CHECK(s.base == base.base);
  for (const auto& p : pairs) {
    CHECK(toylm::forward_slp(s, p.context, p.chosen).slp == toylm::forward_slp(base, p.context, p.chosen).slp);
  }
  CHECK(report.final_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto t = base;
  train_sft(t, chosen_examples(pairs, cfg, toylm::tok::kEos), cfg);
  CHECK(toylm::forward_slp(t, pairs[0].context, pairs[0].chosen).slp ==
        toylm::forward_slp(base, pairs[0].context, pairs[0].chosen).slp);
}

TEST_CASE("DPO trains only the adapter and keeps the reference fixed") {
  const auto base = small_model(4);
  const auto pairs = synthetic_pairs(16, 2);
  auto cfg = quick_config();
  cfg.epochs = 5;
  cfg.lr = 1e-2;
  auto s = base;
  const auto report = train_dpo(s, pairs, cfg);
  CHECK(s.base == base.base);
  CHECK(report.optimizer_steps == 20);
  CHECK(report.step_loss.size() == 20);
  CHECK(report.final_loss < std::log(2.0));
  CHECK(report.pair_accuracy >= 0.8);
  const auto seqs = prepare_pairs(pairs, cfg, toylm::tok::kEos);
  const auto before = reference_slps(base, seqs);
  CHECK(reference_slps(s, seqs) == before);  // adapter-off forward of the trained state

  auto again = base;
  const auto report2 = train_dpo(again, pairs, cfg);
  CHECK(report2.step_loss == report.step_loss);
  CHECK(again.adapter->params == s.adapter->params);
}

TEST_CASE("single pair margin grows epoch over epoch") {
  auto s = small_model(5);
  const auto pairs = synthetic_pairs(1, 3);
  auto cfg = quick_config();
  cfg.epochs = 8;
  cfg.lr = 5e-3;
  cfg.batch_size = 1;
  const auto report = train_dpo(s, pairs, cfg);
  REQUIRE(report.epoch_margin.size() == 8);
  for (std::size_t e = 1; e < report.epoch_margin.size(); ++e) {
    CHECK(report.epoch_margin[e] > report.epoch_margin[e - 1]);
  }
}

TEST_CASE("SFT memorizes a single example and lowers held-out NLL") {
  auto s = small_model(6);
  // The final norm bounds the hidden state, so reaching p > 0.99 on every
  // target token needs a wider output projection still.
  for (double& w : s.param("out")) w *= 4.0;
  const auto pairs = synthetic_pairs(1, 5);
  auto cfg = quick_config();
  cfg.epochs = 300;
  cfg.lr = 1e-2;
  cfg.batch_size = 1;
  const auto ex = chosen_examples(pairs, cfg, toylm::tok::kEos);
  CHECK(ex[0].target.size() == pairs[0].chosen.size() + 1);
  train_sft(s, ex, cfg);
  CHECK(sft_nll(s, ex) < 0.01);

  const auto base = small_model(7);
  auto t = base;
  const auto all = chosen_examples(synthetic_pairs(40, 6), cfg, toylm::tok::kEos);
  const std::vector<SftExample> fit(all.begin(), all.begin() + 30), held(all.begin() + 30, all.end());
  auto c2 = quick_config();
  c2.epochs = 5;
  c2.lr = 5e-3;
  train_sft(t, fit, c2);
  CHECK(sft_nll(t, held) < sft_nll(base, held));
}

TEST_CASE("train config reader is strict") {
  const auto j = parse_json(R"({"beta": 0.25, "lr": 0.002, "epochs": 4, "score_weighting": true})", "t");
  const auto c = train_config_from_fields(JsonFields(j, "train.dpo"), toy_train_config());
  CHECK(c.beta == 0.25);
  CHECK(c.lr == 0.002);
  CHECK(c.epochs == 4);
  CHECK(c.score_weighting);
  CHECK(c.lora_rank == toy_train_config().lora_rank);
  const auto round = train_config_from_fields(JsonFields(parse_json(train_config_to_json(c), "t"), "x"), TrainConfig{});
  CHECK(train_config_to_json(round) == train_config_to_json(c));

  try {
    train_config_from_fields(JsonFields(parse_json(R"({"learning_rate": 1})", "t"), "train.dpo"), TrainConfig{});
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("train.dpo.learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(train_config_from_fields(JsonFields(parse_json(R"({"beta": 0})", "t"), "t"), TrainConfig{}), Error);
  const auto rep = replication_train_config();
  CHECK(rep.lora_rank == 32);
  CHECK(rep.grad_accumulation == 8);
}

TEST_CASE("pretraining: identity, determinism and memorization") {
  const auto corpus = toylm::generate_task_corpus(3, 1, toylm::profile_by_name("alpha"),
                                                  std::vector<double>{1.0, 0.0, 0.0}, 1);
  toylm::PretrainSchedule sched;
  sched.steps = 0;
  sched.heldout_examples = 4;
  auto s = small_model(8);
  const auto base = s.base;
  toylm::pretrain_toy(s, corpus, sched);
  CHECK(s.base == base);

  sched.steps = 800;
  sched.batch_size = 4;
  sched.decision_fraction = 1.0;
  sched.warmup = 10;
  auto a = small_model(8), b = small_model(8);
  const auto ra = toylm::pretrain_toy(a, corpus, sched);
  toylm::pretrain_toy(b, corpus, sched);
  CHECK(a.base == b.base);
  const auto ex = toylm::decision_example(corpus.tasks[0], toylm::profile_by_name("alpha"));
  const std::vector<toylm::TrainingExample> one = {ex};
  CHECK(toylm::mean_token_nll(a, one) < 0.01);
  CHECK(ra.final_heldout < ra.initial_heldout);
}

}  // TEST_SUITE
