#include "selfcon/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfcon/core/error.hpp"
#include "selfcon/toylm/forward.hpp"
#include "selfcon/toylm/tasks.hpp"

namespace selfcon::train {

using toylm::GradScope;
using toylm::SequenceSpec;

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void ensure_adapter(toylm::ToyModelState& state, const TrainConfig& config) {
  if (state.adapter) return;
  Rng rng(config.seed, "adapter-init");
  toylm::attach_adapter(state, config.lora_rank, config.lora_alpha, rng);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed, "train/shuffle").split(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void check_loss(double loss, long step) {
  if (!std::isfinite(loss)) fail(ErrorKind::kDivergence, "training: non-finite loss at step " + std::to_string(step));
}

// Runs the epoch/batch/accumulation loop; `micro` computes (loss, grad) for a
// set of example indices, with the loss already averaged over them.
template <typename Micro, typename EpochEnd>
void run_loop(toylm::ToyModelState& state, std::size_t count, const TrainConfig& config, TrainReport& report,
              const TrainLogger& log, Micro&& micro, EpochEnd&& epoch_end) {
  auto& params = state.adapter->params;
  toylm::AdamW opt(params.size(), {.lr = config.lr,
                                   .beta1 = 0.9,
                                   .beta2 = 0.999,
                                   .eps = 1e-8,
                                   .weight_decay = config.weight_decay,
                                   .grad_clip = config.grad_clip});
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(count, config.seed, epoch);
    double epoch_total = 0.0;
    std::size_t epoch_batches = 0;
    std::vector<double> accum(params.size(), 0.0);
    int pending = 0;
    double pending_loss = 0.0;
    for (std::size_t begin = 0; begin < count; begin += batch) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, begin + batch)));
      auto [loss, grad] = micro(idx);
      check_loss(loss, report.optimizer_steps);
      for (std::size_t t = 0; t < accum.size(); ++t) accum[t] += grad[t];
      pending_loss += loss;
      epoch_total += loss;
      ++epoch_batches;
      ++pending;
      const bool last = begin + batch >= count;
      if (pending == config.grad_accumulation || last) {
        for (double& g : accum) g /= pending;
        opt.step(params, accum, 1.0);
        report.step_loss.push_back(pending_loss / pending);
        if (log) log(epoch, report.optimizer_steps, pending_loss / pending);
        ++report.optimizer_steps;
        std::fill(accum.begin(), accum.end(), 0.0);
        pending = 0;
        pending_loss = 0.0;
      }
    }
    report.epoch_loss.push_back(epoch_batches == 0 ? 0.0 : epoch_total / static_cast<double>(epoch_batches));
    epoch_end();
  }
}

}  // namespace

DpoLoss dpo_loss(double policy_chosen, double policy_rejected, double ref_chosen, double ref_rejected, double beta) {
  for (double v : {policy_chosen, policy_rejected, ref_chosen, ref_rejected, beta}) {
    if (!std::isfinite(v)) fail(ErrorKind::kNonFinite, "dpo_loss: non-finite input");
  }
  DpoLoss out;
  out.margin = (policy_chosen - ref_chosen) - (policy_rejected - ref_rejected);
  out.loss = softplus(-beta * out.margin);
  return out;
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) fail(ErrorKind::kValidation, "train.beta must be > 0");
  if (!(lr >= 0.0)) fail(ErrorKind::kValidation, "train.lr must be >= 0");
  if (epochs < 0) fail(ErrorKind::kValidation, "train.epochs must be >= 0");
  if (batch_size < 1) fail(ErrorKind::kValidation, "train.batch_size must be >= 1");
  if (grad_accumulation < 1) fail(ErrorKind::kValidation, "train.grad_accumulation must be >= 1");
  if (lora_rank < 1) fail(ErrorKind::kValidation, "train.lora_rank must be >= 1");
  if (!(lora_alpha > 0.0)) fail(ErrorKind::kValidation, "train.lora_alpha must be > 0");
}

TrainConfig toy_train_config() {
  TrainConfig c;
  c.lr = 1e-3;
  return c;
}

TrainConfig replication_train_config() {
  TrainConfig c;
  c.beta = 5.0;
  c.lr = 5e-6;
  c.epochs = 10;
  c.batch_size = 16;
  c.grad_accumulation = 8;
  c.lora_rank = 32;
  c.lora_alpha = 32.0;
  return c;
}

std::vector<PairSequences> prepare_pairs(std::span<const bank::PreferencePair> pairs, const TrainConfig& config,
                                         TokenId eos) {
  std::vector<PairSequences> out;
  for (const auto& p : pairs) {
    PairSequences s{p.context, p.chosen, p.rejected, 1.0};
    if (config.append_eos) {
      s.chosen.push_back(eos);
      s.rejected.push_back(eos);
    }
    if (config.score_weighting) s.weight = config.score_scale * p.margin;
    out.push_back(std::move(s));
  }
  if (config.score_weighting && !out.empty()) {
    double total = 0.0;
    for (const auto& s : out) total += s.weight;
    const double mean = total / static_cast<double>(out.size());
    if (mean > 0.0) {
      for (auto& s : out) s.weight /= mean;
    }
  }
  return out;
}

std::vector<std::pair<double, double>> reference_slps(const toylm::ToyModelState& state,
                                                      std::span<const PairSequences> pairs) {
  std::vector<std::pair<double, double>> ref;
  ref.reserve(pairs.size());
  for (const auto& p : pairs) {
    const std::vector<SequenceSpec> batch = {{p.context, p.chosen}, {p.context, p.rejected}};
    toylm::GraphOptions options;
    options.use_adapter = false;
    auto g = toylm::build_slp_graph(state, batch, options);
    const auto v = g.tape.value(g.slps);
    ref.emplace_back(v[0], v[1]);
  }
  return ref;
}

Objective dpo_objective(const toylm::ToyModelState& state, std::span<const PairSequences> pairs,
                        std::span<const std::pair<double, double>> ref, double beta) {
  if (!state.adapter) fail(ErrorKind::kInvalidArgument, "dpo_objective: state has no adapter");
  std::vector<SequenceSpec> batch;
  for (const auto& p : pairs) {
    batch.push_back({p.context, p.chosen});
    batch.push_back({p.context, p.rejected});
  }
  toylm::GraphOptions options;
  options.scope = GradScope::kAdapter;
  auto g = toylm::build_slp_graph(state, batch, options);
  const auto slps = g.tape.value(g.slps);
  Objective out;
  std::vector<double> seed(slps.size(), 0.0);
  const double n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto l = dpo_loss(slps[2 * i], slps[2 * i + 1], ref[i].first, ref[i].second, beta);
    const double w = pairs[i].weight;
    out.loss += w * l.loss / n;
    out.margins.push_back(l.margin);
    // d softplus(-beta m) / d m = -beta * sigmoid(-beta m)
    const double dm = -beta * sigmoid(-beta * l.margin) * w / n;
    seed[2 * i] = dm;
    seed[2 * i + 1] = -dm;
  }
  g.tape.backward(g.slps, seed);
  out.grad = toylm::collect_param_grad(g, state, GradScope::kAdapter);
  return out;
}

TrainReport train_dpo(toylm::ToyModelState& state, std::span<const bank::PreferencePair> pairs,
                      const TrainConfig& config, const TrainLogger& log) {
  config.validate();
  ensure_adapter(state, config);
  const auto seqs = prepare_pairs(pairs, config, toylm::tok::kEos);
  const auto ref = reference_slps(state, seqs);
  TrainReport report;
  double epoch_margin = 0.0;
  auto micro = [&](const std::vector<std::size_t>& idx) {
    std::vector<PairSequences> sub;
    std::vector<std::pair<double, double>> sub_ref;
    for (std::size_t i : idx) {
      sub.push_back(seqs[i]);
      sub_ref.push_back(ref[i]);
    }
    auto obj = dpo_objective(state, sub, sub_ref, config.beta);
    for (double m : obj.margins) epoch_margin += config.beta * m;
    return std::pair<double, std::vector<double>>(obj.loss, std::move(obj.grad));
  };
  auto epoch_end = [&] {
    report.epoch_margin.push_back(seqs.empty() ? 0.0 : epoch_margin / static_cast<double>(seqs.size()));
    epoch_margin = 0.0;
  };
  run_loop(state, seqs.size(), config, report, log, micro, epoch_end);

  // Final pass over every pair with the trained adapter.
  double total = 0.0, margin = 0.0;
  std::size_t wins = 0;
  constexpr std::size_t kEvalChunk = 16;
  for (std::size_t begin = 0; begin < seqs.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(seqs.size(), begin + kEvalChunk);
    std::vector<SequenceSpec> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back({seqs[i].context, seqs[i].chosen});
      batch.push_back({seqs[i].context, seqs[i].rejected});
    }
    auto g = toylm::build_slp_graph(state, batch, {});
    const auto v = g.tape.value(g.slps);
    for (std::size_t i = begin; i < end; ++i) {
      const auto l = dpo_loss(v[2 * (i - begin)], v[2 * (i - begin) + 1], ref[i].first, ref[i].second, config.beta);
      total += l.loss;
      margin += config.beta * l.margin;
      wins += l.margin > 0.0;
    }
  }
  if (!seqs.empty()) {
    const double n = static_cast<double>(seqs.size());
    report.final_loss = total / n;
    report.pair_accuracy = static_cast<double>(wins) / n;
    report.final_margin = margin / n;
  }
  return report;
}

std::vector<SftExample> chosen_examples(std::span<const bank::PreferencePair> pairs, const TrainConfig& config,
                                        TokenId eos) {
  std::vector<SftExample> out;
  for (const auto& p : pairs) {
    SftExample e{p.context, p.chosen};
    if (config.append_eos) e.target.push_back(eos);
    out.push_back(std::move(e));
  }
  return out;
}

double sft_nll(const toylm::ToyModelState& state, std::span<const SftExample> examples) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& e : examples) {
    total -= toylm::forward_slp(state, e.context, e.target).slp;
    tokens += e.target.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

TrainReport train_sft(toylm::ToyModelState& state, std::span<const SftExample> examples, const TrainConfig& config,
                      const TrainLogger& log) {
  config.validate();
  ensure_adapter(state, config);
  TrainReport report;
  run_loop(state, examples.size(), config, report, log, [&](const std::vector<std::size_t>& idx) {
    std::vector<SequenceSpec> batch;
    double tokens = 0.0;
    for (std::size_t i : idx) {
      batch.push_back({examples[i].context, examples[i].target});
      tokens += static_cast<double>(examples[i].target.size());
    }
    toylm::GraphOptions options;
    options.scope = GradScope::kAdapter;
    auto g = toylm::build_slp_graph(state, batch, options);
    double loss = 0.0;
    for (double s : g.tape.value(g.slps)) loss -= s;
    loss /= tokens;
    std::vector<double> seed(batch.size(), -1.0 / tokens);
    g.tape.backward(g.slps, seed);
    return std::pair<double, std::vector<double>>(loss, toylm::collect_param_grad(g, state, GradScope::kAdapter));
  }, [] {});
  report.final_loss = sft_nll(state, examples);
  return report;
}

}  // namespace selfcon::train
