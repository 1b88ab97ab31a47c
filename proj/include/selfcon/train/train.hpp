#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "selfcon/bank/bank.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/toylm/model.hpp"
#include "selfcon/toylm/optim.hpp"

namespace selfcon::train {

struct DpoLoss {
  double loss = 0.0;
  double margin = 0.0;  // (pi_c - ref_c) - (pi_r - ref_r)
};

/// softplus(-beta * margin), the stable form of -log sigmoid(beta * margin).
DpoLoss dpo_loss(double policy_chosen, double policy_rejected, double ref_chosen, double ref_rejected, double beta);

struct TrainConfig {
  double beta = 0.5;  // DPO only
  double lr = 1e-4;
  int epochs = 10;
  int batch_size = 16;
  int grad_accumulation = 1;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  int lora_rank = 8;
  double lora_alpha = 16.0;
  /// Multiplier on alignment scores before score-dependent pair weighting.
  double score_scale = 10.0;
  /// When set, each pair's loss is weighted by score_scale * margin,
  /// normalized to mean 1 over the pair set. Off by default.
  bool score_weighting = false;
  /// Append the end-of-sequence token to every trained explanation.
  bool append_eos = true;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Desk-scale defaults for the toy model.
TrainConfig toy_train_config();
/// Paper-scale settings (rank 32, alpha 32, 10 epochs, batch 16, accumulation 8).
TrainConfig replication_train_config();

/// Strict reader; unknown keys raise kValidation naming the field.
TrainConfig train_config_from_fields(const JsonFields& fields, TrainConfig defaults);
std::string train_config_to_json(const TrainConfig& config);

struct TrainReport {
  std::vector<double> step_loss;     // one per optimizer step
  std::vector<double> epoch_margin;  // mean implicit-reward margin beta*m seen during each epoch (DPO)
  std::vector<double> epoch_loss;    // mean loss per epoch
  double final_loss = 0.0;           // mean loss over all examples after training
  double final_margin = 0.0;         // mean beta*m after training (DPO)
  double pair_accuracy = 0.0;        // fraction of pairs with chosen reward > rejected (DPO)
  long optimizer_steps = 0;
  std::vector<std::string> checkpoints;
};

using TrainLogger = std::function<void(int epoch, long step, double loss)>;

/// Sequences prepared for training: full context and continuation tokens.
struct PairSequences {
  std::vector<TokenId> context;
  std::vector<TokenId> chosen;
  std::vector<TokenId> rejected;
  double weight = 1.0;
};
std::vector<PairSequences> prepare_pairs(std::span<const bank::PreferencePair> pairs, const TrainConfig& config,
                                         TokenId eos);

/// Mean DPO loss over the pairs and its gradient w.r.t. the adapter parameters.
/// `ref` holds (chosen, rejected) reference slps per pair.
struct Objective {
  double loss = 0.0;
  std::vector<double> grad;
  std::vector<double> margins;
};
Objective dpo_objective(const toylm::ToyModelState& state, std::span<const PairSequences> pairs,
                        std::span<const std::pair<double, double>> ref, double beta);
std::vector<std::pair<double, double>> reference_slps(const toylm::ToyModelState& state,
                                                      std::span<const PairSequences> pairs);

/// Attaches a fresh adapter when none is present; only adapter parameters change.
TrainReport train_dpo(toylm::ToyModelState& state, std::span<const bank::PreferencePair> pairs,
                      const TrainConfig& config, const TrainLogger& log = {});

struct SftExample {
  std::vector<TokenId> context;
  std::vector<TokenId> target;
};
std::vector<SftExample> chosen_examples(std::span<const bank::PreferencePair> pairs, const TrainConfig& config,
                                        TokenId eos);
/// Mean per-token NLL of the targets.
double sft_nll(const toylm::ToyModelState& state, std::span<const SftExample> examples);

TrainReport train_sft(toylm::ToyModelState& state, std::span<const SftExample> examples, const TrainConfig& config,
                      const TrainLogger& log = {});

}  // namespace selfcon::train
