#include "selfcon/toylm/pretrain.hpp"

#include <cmath>

#include "selfcon/core/error.hpp"
#include "selfcon/toylm/forward.hpp"

namespace selfcon::toylm {
namespace {

int option_with_word(const SyntheticTask& task, TokenId word) {
  for (std::size_t i = 0; i < task.options.size(); ++i) {
    if (!task.options[i].empty() && task.options[i][0] == word) return static_cast<int>(i);
  }
  return task.gold;
}

std::vector<TokenId> taught_decision(const SyntheticTask& task, const TaskProfile& profile) {
  const int key = key_index(task, profile);
  const int option = key < 0 ? task.gold : option_with_word(task, profile.answer_token(profile.taught_answer(key)));
  std::vector<TokenId> out = {toy_template().option_letters[static_cast<std::size_t>(option)]};
  out.insert(out.end(), task.options[static_cast<std::size_t>(option)].begin(),
             task.options[static_cast<std::size_t>(option)].end());
  return out;
}

}  // namespace

TrainingExample decision_example(const SyntheticTask& task, const TaskProfile& profile) {
  const auto x = render_decision_prompt(task, toy_template(), toy_vocabulary());
  TrainingExample ex;
  ex.prompt.assign(x.tokens().begin(), x.tokens().end());
  ex.continuation = taught_decision(task, profile);
  ex.continuation.push_back(tok::kEos);
  return ex;
}

TrainingExample explanation_example(const SyntheticTask& task, const TaskProfile& profile, int style, Rng& rng) {
  const auto x = render_decision_prompt(task, toy_template(), toy_vocabulary());
  const auto decision = taught_decision(task, profile);
  const auto prompt = render_explanation_prompt(x, decision, toy_template(), toy_vocabulary());
  TrainingExample ex;
  ex.prompt.assign(prompt.tokens().begin(), prompt.tokens().end());
  const TokenId answer = decision.back();
  const int key_pos = task.key_positions.empty() ? -1 : task.key_positions.front();
  if (style == 0 && key_pos >= 0) {
    ex.continuation = {task.question[static_cast<std::size_t>(key_pos)], tok::kArrow, answer, tok::kPeriod};
  } else if (style == 1 || (style == 0 && key_pos < 0)) {
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < task.question.size(); ++i) {
      if (static_cast<int>(i) != key_pos) others.push_back(i);
    }
    const TokenId cited = others.empty() ? task.question.front() : task.question[others[rng.below(others.size())]];
    ex.continuation = {cited, tok::kArrow, answer, tok::kPeriod};
  } else {
    ex.continuation = {tok::kBecause, answer, tok::kPeriod};
  }
  ex.continuation.push_back(tok::kEos);
  return ex;
}

double mean_token_nll(const ToyModelState& state, std::span<const TrainingExample> examples) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    total -= forward_slp(state, ex.prompt, ex.continuation).slp;
    tokens += ex.continuation.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

namespace {

int draw_style(const ExplanationMix& mix, Rng& rng) {
  const double total = mix.faithful + mix.distractor + mix.generic;
  const double u = rng.uniform() * total;
  if (u < mix.faithful) return 0;
  if (u < mix.faithful + mix.distractor) return 1;
  return 2;
}

TrainingExample draw_example(const SyntheticTask& task, const PretrainSchedule& schedule, Rng& rng) {
  const TaskProfile profile = profile_by_name(task.profile);
  if (rng.uniform() < schedule.decision_fraction) return decision_example(task, profile);
  return explanation_example(task, profile, draw_style(schedule.mix, rng), rng);
}

}  // namespace

PretrainReport pretrain_toy(ToyModelState& state, const TaskCorpus& corpus, const PretrainSchedule& schedule,
                            const PretrainLogger& log) {
  const auto train = corpus.indices(Split::kTrain);
  if (train.empty()) fail(ErrorKind::kInvalidArgument, "pretrain: corpus has no training instances");
  auto heldout_idx = corpus.indices(Split::kValidation);
  if (heldout_idx.empty()) heldout_idx = train;

  Rng heldout_rng(schedule.seed, "pretrain/heldout");
  std::vector<TrainingExample> heldout;
  for (int i = 0; i < schedule.heldout_examples; ++i) {
    const auto& task = corpus.tasks[heldout_idx[static_cast<std::size_t>(i) % heldout_idx.size()]];
    heldout.push_back(draw_example(task, schedule, heldout_rng));
  }

  PretrainReport report;
  report.initial_heldout = mean_token_nll(state, heldout);
  if (schedule.steps <= 0) {
    report.final_heldout = report.initial_heldout;
    return report;
  }

  AdamW opt(state.base.size(), schedule.optimizer);
  Rng rng(schedule.seed, "pretrain/batches");
  for (long step = 0; step < schedule.steps; ++step) {
    std::vector<SequenceSpec> batch;
    std::size_t tokens = 0;
    for (int b = 0; b < schedule.batch_size; ++b) {
      const auto& task = corpus.tasks[train[rng.below(train.size())]];
      auto ex = draw_example(task, schedule, rng);
      tokens += ex.continuation.size();
      batch.push_back({std::move(ex.prompt), std::move(ex.continuation)});
    }
    GraphOptions options;
    options.scope = GradScope::kBase;
    SlpGraph graph = build_slp_graph(state, batch, options);
    double loss = 0.0;
    for (double s : graph.tape.value(graph.slps)) loss -= s;
    loss /= static_cast<double>(tokens);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kDivergence, "pretrain: non-finite loss at step " + std::to_string(step));
    }
    std::vector<double> seed(batch.size(), -1.0 / static_cast<double>(tokens));
    graph.tape.backward(graph.slps, seed);
    const auto grad = collect_param_grad(graph, state, GradScope::kBase);
    const double warm = schedule.warmup > 0 ? std::min(1.0, static_cast<double>(step + 1) / schedule.warmup) : 1.0;
    const double progress = static_cast<double>(step) / static_cast<double>(schedule.steps);
    const double lr_scale = warm * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
    opt.step(state.base, grad, lr_scale);
    report.step_loss.push_back(loss);
    if (log && schedule.log_every > 0 && (step % schedule.log_every == 0 || step + 1 == schedule.steps)) log(step, loss);
  }
  report.final_heldout = mean_token_nll(state, heldout);
  state.seeds.push_back(schedule.seed);
  return report;
}

}  // namespace selfcon::toylm
