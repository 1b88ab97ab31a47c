#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "selfcon/cli/pipeline.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"
#include "selfcon/oracle/toy_oracle.hpp"
#include "selfcon/oracle/wire.hpp"
#include "selfcon/toylm/checkpoint.hpp"
#include "selfcon/toylm/tasks.hpp"

namespace fs = std::filesystem;
using namespace selfcon;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string profile = "toy";
  std::string out;
};

void log_line(const std::string& s) { std::cerr << s << std::endl; }

fs::path out_path(const Globals& g, const std::string& fallback) {
  const std::string out = g.out.empty() ? fallback : g.out;
  if (out.empty()) fail(ErrorKind::kValidation, "--out is required");
  return cli::resolve_out(out);
}

struct BankFlags {
  std::string config;
  std::string method;
  std::string metric;
  std::optional<int> k;
  std::optional<std::size_t> max_instances;
  std::string split;
  std::optional<int> threads;
  std::string skip_tokens;
};

void add_bank_flags(CLI::App* cmd, BankFlags& f) {
  cmd->add_option("--config", f.config, "JSON file with bank settings (strict keys)");
  cmd->add_option("--method", f.method, "lime | lig | kshap");
  cmd->add_option("--metric", f.metric, "sp | cos");
  cmd->add_option("--k", f.k, "explanations per instance");
  cmd->add_option("--max-instances", f.max_instances, "cap on instances (0 = all)");
  cmd->add_option("--split", f.split, "train | validation | test | all");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  cmd->add_option("--skip-tokens", f.skip_tokens, "skip-token literal file");
}

bank::BankConfig bank_config(const Globals& g, const BankFlags& f, std::optional<Split> default_split) {
  const auto profile = cli::parse_profile(g.profile);
  auto c = cli::default_bank_config(profile);
  c.split = default_split;
  if (!f.config.empty()) {
    const json j = parse_json(read_file(f.config), f.config);
    c = bank::config_from_fields(JsonFields(j, "bank"), c);
  }
  if (!f.method.empty()) c.method = parse_attribution_method(f.method);
  if (!f.metric.empty()) c.metric = alignment::parse_metric(f.metric);
  if (f.k) c.k = *f.k;
  if (g.seed || f.k) {
    const std::uint64_t first = g.seed ? *g.seed : c.explanation_seeds.front();
    c.explanation_seeds.clear();
    for (int i = 0; i < c.k; ++i) c.explanation_seeds.push_back(first + static_cast<std::uint64_t>(i));
  }
  if (g.seed) c.attribution_seed = *g.seed;
  if (f.max_instances) c.max_instances = *f.max_instances;
  if (!f.split.empty()) {
    if (f.split == "all") c.split.reset();
    else c.split = parse_split(f.split);
  }
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

std::string oracle_spec(const std::string& s) {
  // A bare path is read as a toy checkpoint.
  if (s.rfind("toy:", 0) == 0 || s.rfind("remote:", 0) == 0) return s;
  return "toy:" + s;
}

void print_bank_summary(const bank::Bank& b) {
  const auto s = bank::summarize(b.records, b.errors.size());
  std::cout << bank::summary_to_json(s);
}

eval::EvalReport report_for_dir(const fs::path& dir) {
  const auto b = bank::read_bank(dir);
  eval::ModeLabel mode = eval::ModeLabel::kBB;
  std::string model;
  if (fs::exists(dir / "report.json")) {
    const json j = parse_json(read_file(dir / "report.json"), (dir / "report.json").string());
    mode = eval::parse_mode(j.value("mode", "BB"));
    model = j.value("model", "");
  }
  auto r = eval::report_from_bank(mode, b);
  r.model = model;
  return r;
}

int run(int argc, char** argv) {
  CLI::App app{"Attributional self-consistency engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "global seed for attribution, explanation sampling and training");
  app.add_option("--profile", g.profile, "toy | replication")->check(CLI::IsMember({"toy", "replication"}));
  app.add_option("--out", g.out, "output path (relative paths honour SELFCON_OUT_ROOT)");

  // corpus gen
  auto* corpus = app.add_subcommand("corpus", "synthetic corpora")->require_subcommand(1);
  auto* corpus_gen = corpus->add_subcommand("gen", "generate a synthetic multiple-choice corpus");
  std::string task = "alpha";
  std::size_t size = 5000;
  std::uint64_t corpus_seed = 1;
  std::vector<double> split_ratios = {0.7, 0.2, 0.1};
  std::optional<std::uint64_t> split_seed;
  corpus_gen->add_option("--task", task, "task profile: alpha | beta");
  corpus_gen->add_option("--size", size, "number of instances");
  corpus_gen->add_option("--corpus-seed", corpus_seed, "generator seed");
  corpus_gen->add_option("--split-ratios", split_ratios, "train validation test ratios")->expected(3);
  corpus_gen->add_option("--split-seed", split_seed, "split shuffle seed (defaults to the corpus seed)");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "train the toy base model from scratch");
  auto recipe = cli::toy_pretrain_recipe();
  pretrain->add_option("--steps", recipe.schedule.steps, "optimizer steps");
  pretrain->add_option("--batch-size", recipe.schedule.batch_size, "examples per step");
  pretrain->add_option("--tasks", recipe.tasks, "task profiles in the mixture");
  pretrain->add_option("--corpus-seeds", recipe.corpus_seeds, "one corpus seed per task");

  // bank build
  auto* bank_cmd = app.add_subcommand("bank", "self-consistency banks")->require_subcommand(1);
  auto* bank_build = bank_cmd->add_subcommand("build", "build a bank over a corpus");
  std::string corpus_path, oracle_text;
  BankFlags bank_flags;
  bank_build->add_option("--corpus", corpus_path, "corpus file or external dataset")->required();
  bank_build->add_option("--oracle", oracle_text, "toy:<checkpoint> | remote:stdio:<cmd> | remote:tcp:<host>:<port>")
      ->required();
  add_bank_flags(bank_build, bank_flags);

  // train dpo | sft
  auto* train_cmd = app.add_subcommand("train", "adapter fine-tuning on bank preferences")->require_subcommand(1);
  std::string train_bank, train_base, train_config;
  std::optional<double> lr, beta;
  std::optional<int> epochs;
  std::string train_metric;
  auto add_train = [&](const std::string& name, const std::string& help) {
    auto* c = train_cmd->add_subcommand(name, help);
    c->add_option("--bank", train_bank, "bank directory")->required();
    c->add_option("--base", train_base, "base checkpoint")->required();
    c->add_option("--config", train_config, "JSON file with training settings (strict keys)");
    c->add_option("--lr", lr);
    c->add_option("--epochs", epochs);
    c->add_option("--metric", train_metric, "ranking metric for pairs: sp | cos (default: the bank's)");
    if (name == "dpo") c->add_option("--beta", beta);
    return c;
  };
  auto* train_dpo = add_train("dpo", "direct preference optimization on best/worst pairs");
  auto* train_sft = add_train("sft", "supervised fine-tuning on the chosen explanations");

  // eval run | agreement | rank-sep | correctness
  auto* eval_cmd = app.add_subcommand("eval", "evaluation")->require_subcommand(1);
  auto* eval_run = eval_cmd->add_subcommand("run", "regenerate and score on held-out instances");
  std::string mode_text = "bb", decider, explainer;
  BankFlags eval_flags;
  eval_run->add_option("--mode", mode_text, "bb | bt | tt");
  eval_run->add_option("--decider", decider, "decider checkpoint or oracle")->required();
  eval_run->add_option("--explainer", explainer, "explainer checkpoint or oracle (default: decider)");
  eval_run->add_option("--corpus", corpus_path, "corpus file")->required();
  add_bank_flags(eval_run, eval_flags);
  std::string model_name;
  eval_run->add_option("--model-name", model_name, "label for the tuned model in tables");

  auto* eval_agree = eval_cmd->add_subcommand("agreement", "top-1/top-3/Spearman agreement of two banks");
  std::string bank_a, bank_b, metric_text = "sp";
  eval_agree->add_option("--bank-a", bank_a)->required();
  eval_agree->add_option("--bank-b", bank_b)->required();
  eval_agree->add_option("--metric", metric_text, "sp | cos");

  auto* eval_rank = eval_cmd->add_subcommand("rank-sep", "per-rank score distributions and spread");
  std::string rank_bank;
  eval_rank->add_option("--bank", rank_bank)->required();

  auto* eval_corr = eval_cmd->add_subcommand("correctness", "scores split by decision correctness");
  eval_corr->add_option("--bank", rank_bank)->required();

  // report render
  auto* report_cmd = app.add_subcommand("report", "reports")->require_subcommand(1);
  auto* report_render = report_cmd->add_subcommand("render", "Worst/Mean/Best table from eval directories");
  std::vector<std::string> eval_dirs;
  report_render->add_option("--eval", eval_dirs, "eval output directories, BB first")->required();
  report_render->add_option("--metric", metric_text, "sp | cos");

  // pipeline run
  auto* pipeline_cmd = app.add_subcommand("pipeline", "config-driven pipelines")->require_subcommand(1);
  auto* pipeline_run = pipeline_cmd->add_subcommand("run", "run corpus -> bank -> train -> eval");
  std::string pipeline_config;
  pipeline_run->add_option("--config", pipeline_config, "pipeline JSON")->required();

  // attribute
  auto* attribute = app.add_subcommand("attribute", "attribution vectors, one JSON line per target");
  std::string attr_target = "decision";
  std::string prompt_text, continuation_text;
  BankFlags attr_flags;
  attribute->add_option("--oracle", oracle_text, "oracle")->required();
  attribute->add_option("--corpus", corpus_path, "corpus file");
  attribute->add_option("--target", attr_target, "decision | explanations")
      ->check(CLI::IsMember({"decision", "explanations"}));
  attribute->add_option("--prompt", prompt_text, "whitespace-separated prompt pieces (instead of --corpus)");
  attribute->add_option("--continuation", continuation_text, "whitespace-separated continuation pieces");
  add_bank_flags(attribute, attr_flags);

  // oracle serve
  auto* oracle_cmd = app.add_subcommand("oracle", "oracle wire protocol")->require_subcommand(1);
  auto* oracle_serve = oracle_cmd->add_subcommand("serve", "serve a toy checkpoint over stdio or TCP");
  std::string serve_model;
  std::optional<int> port;
  int max_connections = 0;
  oracle_serve->add_option("--oracle", serve_model, "checkpoint to serve")->required();
  oracle_serve->add_option("--tcp", port, "listen on this TCP port instead of stdio");
  oracle_serve->add_option("--max-connections", max_connections, "stop after this many connections (0 = never)");

  for (auto* sub : {corpus, corpus_gen, pretrain, bank_cmd, bank_build, train_cmd, train_dpo, train_sft, eval_cmd,
                    eval_run, eval_agree, eval_rank, eval_corr, report_cmd, report_render, pipeline_cmd, pipeline_run,
                    attribute, oracle_cmd, oracle_serve}) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);
  const auto profile = cli::parse_profile(g.profile);

  if (corpus_gen->parsed()) {
    const auto path = out_path(g, "");
    const auto c = toylm::generate_task_corpus(corpus_seed, size, toylm::profile_by_name(task), split_ratios,
                                               split_seed.value_or(corpus_seed));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    toylm::save_corpus(c, path);
    log_line("wrote " + std::to_string(c.tasks.size()) + " instances to " + path.string());
    return 0;
  }

  if (pretrain->parsed()) {
    if (g.seed) recipe.schedule.seed = *g.seed;
    const auto path = out_path(g, "");
    toylm::PretrainReport report;
    const auto state = cli::pretrain_base(recipe, &report, [&](long step, double loss) {
      if (step % 500 == 0) log_line("step " + std::to_string(step) + " loss " + short_decimal(loss, 5));
    });
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    toylm::save_checkpoint(state, path);
    log_line("held-out loss " + short_decimal(report.initial_heldout, 5) + " -> " +
             short_decimal(report.final_heldout, 5));
    std::cout << sha256_file(path) << "  " << path.string() << "\n";
    return 0;
  }

  if (bank_build->parsed()) {
    const auto config = bank_config(g, bank_flags, Split::kTrain);
    const auto dir = out_path(g, "");
    const auto corpus_data = cli::load_any_corpus(corpus_path, config);
    const auto oracle = cli::open_oracle(oracle_spec(oracle_text));
    const auto format = cli::toy_prompt_format(bank_flags.skip_tokens);
    const auto b = bank::build_bank(*oracle, corpus_data.tasks, corpus_data.splits, format, config);
    bank::write_bank(b, dir);
    print_bank_summary(b);
    return b.errors.empty() ? 0 : 3;
  }

  if (train_dpo->parsed() || train_sft->parsed()) {
    const std::string objective = train_dpo->parsed() ? "dpo" : "sft";
    auto config = cli::default_train_config(profile);
    if (!train_config.empty()) {
      const json j = parse_json(read_file(train_config), train_config);
      config = train::train_config_from_fields(JsonFields(j, "train"), config);
    }
    if (lr) config.lr = *lr;
    if (epochs) config.epochs = *epochs;
    if (beta) config.beta = *beta;
    if (g.seed) config.seed = *g.seed;
    config.validate();
    const auto b = bank::read_bank(train_bank);
    const auto bank_cfg = bank::config_from_json(b.config_json);
    const auto metric = train_metric.empty() ? bank_cfg.metric : alignment::parse_metric(train_metric);
    const auto pairs = bank::extract_pairs(b.records, metric);
    log_line(std::to_string(pairs.pairs.size()) + " pairs, " + std::to_string(pairs.skipped) + " records skipped");
    auto state = toylm::load_checkpoint(train_base);
    const auto log = [](int epoch, long step, double loss) {
      log_line("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " loss " +
               short_decimal(loss, 6));
    };
    train::TrainReport report;
    std::size_t examples = pairs.pairs.size();
    if (objective == "dpo") {
      report = train::train_dpo(state, pairs.pairs, config, log);
    } else {
      const auto ex = train::chosen_examples(pairs.pairs, config, toylm::tok::kEos);
      examples = ex.size();
      report = train::train_sft(state, ex, config, log);
    }
    const auto path = out_path(g, "");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    toylm::save_checkpoint(state, path);
    fs::path stem = path;
    stem.replace_extension();
    write_file(stem.string() + "_log.jsonl", cli::train_log_jsonl(report));
    const auto summary = cli::train_report_json(report, objective, examples, "");
    write_file(stem.string() + "_summary.json", summary);
    std::cout << summary;
    return 0;
  }

  if (eval_run->parsed()) {
    const auto mode = eval::parse_mode(mode_text);
    auto config = bank_config(g, eval_flags, Split::kTest);
    const auto corpus_data = cli::load_any_corpus(corpus_path, config);
    const auto dec = cli::open_oracle(oracle_spec(decider));
    std::unique_ptr<oracle::Oracle> exp;
    if (!explainer.empty()) exp = cli::open_oracle(oracle_spec(explainer));
    const auto format = cli::toy_prompt_format(eval_flags.skip_tokens);
    const auto report_base = eval::run_mode({mode, dec.get(), exp ? exp.get() : dec.get()}, corpus_data.tasks,
                                            corpus_data.splits, format, config);
    auto report = report_base;
    report.model = model_name;
    report.provenance = "decider=" + dec->id() + " explainer=" + (exp ? exp->id() : dec->id());
    const auto dir = out_path(g, "");
    bank::write_bank(bank::Bank{dec->id(), bank::config_to_json(config), report.records, report.errors}, dir);
    write_file(dir / "report.json", eval::report_to_json(report));
    const std::vector<eval::EvalReport> one = {report};
    std::cout << eval::render_report_table(one, config.metric);
    return 0;
  }

  if (eval_agree->parsed()) {
    const auto a = bank::read_bank(bank_a);
    const auto b = bank::read_bank(bank_b);
    const auto text = eval::agreement_to_json(eval::method_agreement(a, b, alignment::parse_metric(metric_text)));
    if (!g.out.empty()) write_file(out_path(g, ""), text);
    std::cout << text;
    return 0;
  }

  if (eval_rank->parsed()) {
    const auto b = bank::read_bank(rank_bank);
    const auto text = eval::rank_separation_to_json(eval::rank_separation(b.records, alignment::Metric::kCcSp),
                                                    eval::rank_separation(b.records, alignment::Metric::kCcCos));
    if (!g.out.empty()) write_file(out_path(g, ""), text);
    std::cout << text;
    return 0;
  }

  if (eval_corr->parsed()) {
    const auto b = bank::read_bank(rank_bank);
    auto report = eval::report_from_bank(eval::ModeLabel::kBB, b);
    const json j = parse_json(eval::report_to_json(report), "report");
    const auto text = j.at("correctness").dump(2) + "\n";
    if (!g.out.empty()) write_file(out_path(g, ""), text);
    std::cout << text;
    return 0;
  }

  if (report_render->parsed()) {
    std::vector<eval::EvalReport> reports;
    for (const auto& d : eval_dirs) reports.push_back(report_for_dir(d));
    const auto text = eval::render_report_table(reports, alignment::parse_metric(metric_text));
    if (!g.out.empty()) write_file(out_path(g, ""), text);
    std::cout << text;
    return 0;
  }

  if (pipeline_run->parsed()) {
    auto config = cli::load_pipeline_config(pipeline_config);
    if (!g.out.empty()) config.out = g.out;
    const auto result = cli::run_pipeline(config, log_line);
    std::cout << result.manifest.string() << "\n";
    return 0;
  }

  if (attribute->parsed()) {
    const auto config = bank_config(g, attr_flags, Split::kTest);
    const auto oracle = cli::open_oracle(oracle_spec(oracle_text));
    const auto format = cli::toy_prompt_format(attr_flags.skip_tokens);
    const auto& vocab = toylm::toy_vocabulary();
    auto emit = [&](std::uint64_t id, const std::string& target, const AttributionVector& v) {
      std::vector<double> scores;
      for (double s : v.scores) scores.push_back(quantize(s));
      std::cout << json{{"id", id},
                        {"target", target},
                        {"method", to_string(v.method)},
                        {"params", json::parse(bank::config_to_json(config))
                                       .at(v.method == AttributionMethod::kLig    ? "lig"
                                           : v.method == AttributionMethod::kLime ? "lime"
                                                                                  : "kshap")},
                        {"scores", scores},
                        {"target_slp", quantize(v.target_slp)}}
                       .dump()
                << "\n";
    };
    if (!prompt_text.empty()) {
      const auto x = apply_skip_mask(vocab.encode(prompt_text), format.skips);
      const auto cont = vocab.encode(continuation_text);
      emit(0, "continuation", bank::attribute(*oracle, x, {}, cont.tokens(), config, 0));
      return 0;
    }
    if (corpus_path.empty()) fail(ErrorKind::kValidation, "attribute needs --corpus or --prompt");
    const auto corpus_data = cli::load_any_corpus(corpus_path, config);
    std::size_t done = 0;
    for (std::size_t i = 0; i < corpus_data.tasks.size(); ++i) {
      if (config.split && corpus_data.splits[i] != *config.split) continue;
      if (config.max_instances > 0 && done >= config.max_instances) break;
      ++done;
      const auto& t = corpus_data.tasks[i];
      if (attr_target == "decision") {
        const auto x = apply_skip_mask(render_decision_prompt(t, *format.tpl, vocab), format.skips);
        const auto d = bank::elicit_decision(*oracle, t, x, format, config.decision_max_tokens);
        emit(t.id, "decision", bank::attribute(*oracle, x, {}, d.tokens, config, t.id * 64));
      } else {
        const auto r = bank::process_instance(*oracle, *oracle, t, corpus_data.splits[i], format, config);
        emit(t.id, "decision", r.dec_attr);
        for (const auto& v : r.exp_attrs) emit(t.id, "explanation", v);
      }
    }
    return 0;
  }

  if (oracle_serve->parsed()) {
    const auto state = toylm::load_checkpoint(serve_model);
    const oracle::ToyOracle toy(state, "toy:" + sha256_file(serve_model).substr(0, 16));
    if (port) {
      oracle::serve_tcp(toy, *port, max_connections, [](int bound) {
        std::cout << "listening " << bound << std::endl;
      });
    } else {
      oracle::serve_stream(toy, 0, 1);
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << std::endl;
    return e.kind() == ErrorKind::kValidation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
