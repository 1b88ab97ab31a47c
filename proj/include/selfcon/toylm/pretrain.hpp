#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "selfcon/toylm/model.hpp"
#include "selfcon/toylm/optim.hpp"
#include "selfcon/toylm/tasks.hpp"

namespace selfcon::toylm {

/// Probabilities of the explanation styles in the pretraining mixture.
/// faithful: cites the key token; distractor: cites another question token;
/// generic: cites nothing from the question.
struct ExplanationMix {
  double faithful = 0.3;
  double distractor = 0.55;
  double generic = 0.15;
};

struct PretrainSchedule {
  long steps = 3000;
  int batch_size = 16;
  AdamWConfig optimizer{.lr = 3e-3, .beta1 = 0.9, .beta2 = 0.98, .eps = 1e-8, .weight_decay = 0.0, .grad_clip = 1.0};
  long warmup = 100;
  double decision_fraction = 0.4;
  ExplanationMix mix;
  std::uint64_t seed = 42;
  int heldout_examples = 256;
  long log_every = 100;
};

struct PretrainReport {
  std::vector<double> step_loss;  // mean NLL per continuation token
  double initial_heldout = 0.0;
  double final_heldout = 0.0;
};

/// One teacher-forced training example.
struct TrainingExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> continuation;
};

/// Decision example: x -> "<letter> <answer> <eos>" using the taught answer.
TrainingExample decision_example(const SyntheticTask& task, const TaskProfile& profile);
/// Explanation example in the given style (0 faithful, 1 distractor, 2 generic).
TrainingExample explanation_example(const SyntheticTask& task, const TaskProfile& profile, int style, Rng& rng);

/// Mean NLL per continuation token over the examples.
double mean_token_nll(const ToyModelState& state, std::span<const TrainingExample> examples);

using PretrainLogger = std::function<void(long step, double loss)>;

/// Full-parameter training on the corpus's train split; held-out loss is
/// measured on the validation split. Throws kDivergence on a non-finite loss.
PretrainReport pretrain_toy(ToyModelState& state, const TaskCorpus& corpus, const PretrainSchedule& schedule,
                            const PretrainLogger& log = {});

}  // namespace selfcon::toylm
