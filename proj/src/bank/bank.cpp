#include "selfcon/bank/bank.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::bank {

void BankConfig::validate() const {
  if (k < 1) fail(ErrorKind::kValidation, "bank.k must be >= 1");
  if (explanation_seeds.size() != static_cast<std::size_t>(k)) {
    fail(ErrorKind::kValidation, "bank.explanation_seeds must hold exactly k seeds");
  }
  if (decision_max_tokens < 1) fail(ErrorKind::kValidation, "bank.decision_max_tokens must be >= 1");
  if (split_ratios.size() != 3) fail(ErrorKind::kValidation, "split: expected three ratios");
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::kValidation, "split: ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::kValidation, "split: ratios must sum to 1");
  if (threads < 0) fail(ErrorKind::kValidation, "bank.threads must be >= 0");
  if (lig.steps < 1) fail(ErrorKind::kValidation, "bank.lig.steps must be >= 1");
  if (lime.n_samples < 2) fail(ErrorKind::kValidation, "bank.lime.n_samples must be >= 2");
  try {
    sample.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, std::string("bank.sample: ") + e.what());
  }
}

BankConfig toy_bank_config() {
  BankConfig c;
  c.method = AttributionMethod::kLig;
  c.sample.max_tokens = 32;
  return c;
}

Decision elicit_decision(const oracle::Oracle& oracle, const McqaTask& task, const TokenSequence& x,
                         const PromptFormat& format, int max_tokens) {
  oracle::SampleParams greedy;
  greedy.greedy = true;
  greedy.max_tokens = max_tokens;
  Decision d;
  d.tokens = oracle.sample(x.tokens(), greedy);
  d.option = parse_option_letter(d.tokens, *format.tpl, static_cast<int>(task.options.size()));
  d.correct = d.option.has_value() && *d.option == task.gold;
  return d;
}

std::vector<std::vector<TokenId>> sample_explanations(const oracle::Oracle& oracle,
                                                      std::span<const TokenId> explanation_prompt,
                                                      const BankConfig& config) {
  std::vector<std::vector<TokenId>> out;
  for (int i = 0; i < config.k; ++i) {
    oracle::SampleParams p = config.sample;
    p.seed = config.explanation_seeds[static_cast<std::size_t>(i)];
    out.push_back(oracle.sample(explanation_prompt, p));
  }
  return out;
}

namespace {

AttributionVector quantized(AttributionVector v) {
  for (double& s : v.scores) s = quantize(s);
  v.target_slp = quantize(v.target_slp);
  return v;
}

std::vector<TokenId> decision_target(const Decision& d, const PromptFormat& format, DecisionTarget target) {
  if (target == DecisionTarget::kFullAnswer || !d.option) return d.tokens;
  const TokenId letter = format.tpl->option_letters[static_cast<std::size_t>(*d.option)];
  std::size_t end = 0;
  while (end < d.tokens.size() && d.tokens[end] != letter) ++end;
  return {d.tokens.begin(), d.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(end + 1, d.tokens.size()))};
}

}  // namespace

AttributionVector attribute(const oracle::Oracle& oracle, const TokenSequence& x, std::span<const TokenId> context,
                            std::span<const TokenId> continuation, const BankConfig& config, std::uint64_t stream) {
  attribution::AttributionRequest req{x, {context.begin(), context.end()}, {continuation.begin(), continuation.end()}};
  Rng rng = Rng(config.attribution_seed, "attribution").split(stream);
  switch (config.method) {
    case AttributionMethod::kLime: return attribution::attribute_lime(oracle, req, config.lime, rng);
    case AttributionMethod::kLig: return attribution::attribute_lig(oracle, req, config.lig);
    case AttributionMethod::kExactShapley: return attribution::attribute_exact_shapley(oracle, req, config.lime.baseline);
    case AttributionMethod::kKernelShap: return attribution::attribute_kshap(oracle, req, config.kshap, rng);
  }
  fail(ErrorKind::kInvalidArgument, "unknown attribution method");
}

BankRecord process_instance(const oracle::Oracle& decider, const oracle::Oracle& explainer, const McqaTask& task,
                            Split split, const PromptFormat& format, const BankConfig& config) {
  BankRecord r;
  r.id = task.id;
  r.profile = task.profile;
  r.split = split;
  r.gold = task.gold;
  r.x = apply_skip_mask(render_decision_prompt(task, *format.tpl, *format.vocab), format.skips);
  r.decision = elicit_decision(decider, task, r.x, format, config.decision_max_tokens);
  const auto prompt = render_explanation_prompt(r.x, r.decision.tokens, *format.tpl, *format.vocab);
  r.context.assign(prompt.tokens().begin() + static_cast<std::ptrdiff_t>(r.x.size()), prompt.tokens().end());
  r.explanations = sample_explanations(explainer, prompt.tokens(), config);

  const std::uint64_t base_stream = task.id * 64;
  r.dec_attr = quantized(attribute(decider, r.x, {}, decision_target(r.decision, format, config.decision_target),
                                   config, base_stream));
  for (std::size_t i = 0; i < r.explanations.size(); ++i) {
    r.exp_attrs.push_back(quantized(attribute(explainer, r.x, r.context, r.explanations[i], config, base_stream + 1 + i)));
  }
  r.sp = alignment::score_explanations(r.dec_attr, r.exp_attrs, alignment::Metric::kCcSp);
  r.cos = alignment::score_explanations(r.dec_attr, r.exp_attrs, alignment::Metric::kCcCos);
  return r;
}

AggregateStat aggregate(std::span<const BankRecord> records, alignment::Metric metric) {
  AggregateStat s;
  const std::size_t n = records.size();
  if (n == 0) return s;
  std::vector<double> worst, mean, best;
  for (const auto& r : records) {
    const auto& rk = r.ranking(metric);
    double total = 0.0;
    for (const auto& sc : rk.scores) total += sc.value;
    worst.push_back(rk.scores[rk.worst].value);
    best.push_back(rk.scores[rk.best].value);
    mean.push_back(total / static_cast<double>(rk.scores.size()));
  }
  auto stat = [n](const std::vector<double>& v, double& m, double& se) {
    double sum = 0.0;
    for (double x : v) sum += x;
    m = sum / static_cast<double>(n);
    if (n < 2) {
      se = 0.0;
      return;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
  };
  stat(worst, s.worst, s.worst_se);
  stat(mean, s.mean, s.mean_se);
  stat(best, s.best, s.best_se);
  return s;
}

BankSummary summarize(std::span<const BankRecord> records, std::size_t errors) {
  BankSummary s;
  s.records = records.size();
  s.errors = errors;
  std::size_t parsed = 0;
  for (const auto& r : records) {
    if (!r.decision.option) {
      ++s.parse_failures;
    } else {
      ++parsed;
      s.correct += r.decision.correct;
    }
    s.degenerate_sp += r.sp.degenerate_count;
    s.degenerate_cos += r.cos.degenerate_count;
  }
  s.accuracy = parsed == 0 ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(parsed);
  s.sp = aggregate(records, alignment::Metric::kCcSp);
  s.cos = aggregate(records, alignment::Metric::kCcCos);
  return s;
}

Bank build_bank(const oracle::Oracle& decider, const oracle::Oracle& explainer, std::span<const McqaTask> tasks,
                std::span<const Split> splits, const PromptFormat& format, const BankConfig& config) {
  config.validate();
  if (splits.size() != tasks.size()) fail(ErrorKind::kInvalidArgument, "build_bank: splits must parallel tasks");
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (config.split && splits[i] != *config.split) continue;
    if (config.max_instances > 0 && chosen.size() >= config.max_instances) break;
    chosen.push_back(i);
  }

  std::vector<std::optional<BankRecord>> results(chosen.size());
  std::vector<std::optional<RecordError>> failures(chosen.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < chosen.size(); j = next++) {
      const McqaTask& task = tasks[chosen[j]];
      try {
        results[j] = process_instance(decider, explainer, task, splits[chosen[j]], format, config);
      } catch (const Error& e) {
        failures[j] = RecordError{task.id, std::string(to_string(e.kind())), e.what()};
      } catch (const std::exception& e) {
        failures[j] = RecordError{task.id, "internal", e.what()};
      }
    }
  };
  const int threads = config.threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                          : config.threads;
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  Bank bank;
  bank.oracle_id = decider.id() == explainer.id() ? decider.id() : decider.id() + "|" + explainer.id();
  bank.config_json = config_to_json(config);
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    if (results[j]) bank.records.push_back(std::move(*results[j]));
    if (failures[j]) bank.errors.push_back(std::move(*failures[j]));
  }
  return bank;
}

PairSet extract_pairs(std::span<const BankRecord> records, alignment::Metric metric) {
  PairSet out;
  for (const auto& r : records) {
    const auto& rk = r.ranking(metric);
    std::optional<std::size_t> best, worst;
    for (std::size_t i = 0; i < rk.scores.size(); ++i) {
      if (rk.scores[i].degenerate) continue;
      if (!best || rk.scores[i].value > rk.scores[*best].value) best = i;
      if (!worst || rk.scores[i].value < rk.scores[*worst].value) worst = i;
    }
    if (!best || *best == *worst || rk.scores[*best].value == rk.scores[*worst].value) {
      ++out.skipped;
      continue;
    }
    PreferencePair p;
    p.record_id = r.id;
    p.context.assign(r.x.tokens().begin(), r.x.tokens().end());
    p.context.insert(p.context.end(), r.context.begin(), r.context.end());
    p.chosen = r.explanations[*best];
    p.rejected = r.explanations[*worst];
    p.chosen_index = *best;
    p.rejected_index = *worst;
    p.chosen_score = rk.scores[*best].value;
    p.rejected_score = rk.scores[*worst].value;
    p.margin = p.chosen_score - p.rejected_score;
    p.metric = metric;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace selfcon::bank
