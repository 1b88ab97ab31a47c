#include "selfcon/cli/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>

#include "json.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/core/numeric_text.hpp"
#include "selfcon/oracle/toy_oracle.hpp"
#include "selfcon/oracle/wire.hpp"
#include "selfcon/toylm/checkpoint.hpp"
#include "selfcon/toylm/tasks.hpp"

namespace selfcon::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Profile profile) { return profile == Profile::kToy ? "toy" : "replication"; }

Profile parse_profile(std::string_view text) {
  if (text == "toy") return Profile::kToy;
  if (text == "replication") return Profile::kReplication;
  fail(ErrorKind::kValidation, "profile: expected 'toy' or 'replication', got '" + std::string(text) + "'");
}

bank::BankConfig default_bank_config(Profile profile) {
  return profile == Profile::kToy ? bank::toy_bank_config() : bank::BankConfig{};
}

train::TrainConfig default_train_config(Profile profile) {
  return profile == Profile::kToy ? train::toy_train_config() : train::replication_train_config();
}

fs::path resolve_out(const fs::path& out) {
  const char* root = std::getenv("SELFCON_OUT_ROOT");
  if (root == nullptr || *root == '\0' || out.is_absolute()) return out;
  return fs::path(root) / out;
}

namespace {

fs::path resolve_path(const fs::path& p, const fs::path& base_dir) {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

std::vector<std::uint64_t> consecutive_seeds(std::uint64_t first, int k) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < k; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

train::TrainConfig read_train(const JsonFields& parent, std::string_view key, train::TrainConfig defaults,
                              std::uint64_t seed) {
  defaults.seed = seed;
  if (!parent.has(key)) return defaults;
  return train::train_config_from_fields(parent.child(key), defaults);
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
  const json j = parse_json(text, "pipeline config");
  const JsonFields f(j, "");
  f.allow_only({"profile", "seed", "out", "model", "skip_tokens", "stages", "corpus", "bank", "train", "eval"});
  PipelineConfig c;
  std::string s;
  if (f.has("profile")) {
    f.read("profile", s);
    c.profile = parse_profile(s);
  }
  f.read("seed", c.seed);
  f.read("out", s);
  c.out = s;
  if (c.out.empty()) fail(ErrorKind::kValidation, "out: output directory is required");
  s.clear();
  f.read("model", s);
  c.model = resolve_path(s, base_dir);
  s.clear();
  f.read("skip_tokens", s);
  c.skip_tokens = resolve_path(s, base_dir);
  f.read("stages", c.stages);
  static const std::vector<std::string> kStages = {"corpus", "bank", "train", "eval"};
  for (const auto& st : c.stages) {
    if (std::find(kStages.begin(), kStages.end(), st) == kStages.end()) {
      fail(ErrorKind::kValidation, "stages: unknown stage '" + st + "'");
    }
  }

  if (f.has("corpus")) {
    const auto cf = f.child("corpus");
    cf.allow_only({"source", "task", "size", "seed", "split", "split_seed", "path"});
    cf.read("source", c.corpus.source);
    cf.read("task", c.corpus.task);
    cf.read("size", c.corpus.size);
    cf.read("seed", c.corpus.seed);
    c.corpus.split_seed = c.corpus.seed;
    cf.read("split", c.corpus.split);
    cf.read("split_seed", c.corpus.split_seed);
    s.clear();
    cf.read("path", s);
    c.corpus.path = resolve_path(s, base_dir);
  }
  if (c.corpus.source != "synthetic" && c.corpus.source != "external") {
    fail(ErrorKind::kValidation, "corpus.source: expected 'synthetic' or 'external'");
  }
  if (c.corpus.source == "external" && c.corpus.path.empty()) {
    fail(ErrorKind::kValidation, "corpus.path: required for an external corpus");
  }
  if (c.corpus.source == "synthetic") toylm::profile_by_name(c.corpus.task);
  if (c.corpus.size == 0) fail(ErrorKind::kValidation, "corpus.size must be >= 1");
  {
    bank::BankConfig probe;
    probe.split_ratios = c.corpus.split;
    try {
      probe.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kValidation, std::string("corpus.") + e.what());
    }
  }

  bank::BankConfig bank_defaults = default_bank_config(c.profile);
  bank_defaults.attribution_seed = c.seed;
  bank_defaults.explanation_seeds = consecutive_seeds(c.seed, bank_defaults.k);
  bank_defaults.split_ratios = c.corpus.split;
  bank_defaults.split_seed = c.corpus.split_seed;
  if (f.has("bank")) {
    const auto bf = f.child("bank");
    const bool seeds_given = bf.has("explanation_seeds");
    c.bank = bank::config_from_fields(bf, bank_defaults);
    if (!seeds_given) {
      c.bank.explanation_seeds = consecutive_seeds(c.seed, c.bank.k);
      c.bank.validate();
    }
  } else {
    c.bank = bank_defaults;
  }

  const auto train_defaults = default_train_config(c.profile);
  c.train.dpo = train_defaults;
  c.train.sft = train_defaults;
  c.train.dpo.seed = c.train.sft.seed = c.seed;
  if (f.has("train")) {
    const auto tf = f.child("train");
    tf.allow_only({"objectives", "dpo", "sft"});
    tf.read("objectives", c.train.objectives);
    c.train.dpo = read_train(tf, "dpo", train_defaults, c.seed);
    c.train.sft = read_train(tf, "sft", train_defaults, c.seed);
  }
  for (const auto& o : c.train.objectives) {
    if (o != "dpo" && o != "sft") fail(ErrorKind::kValidation, "train.objectives: unknown objective '" + o + "'");
  }

  if (f.has("eval")) {
    const auto ef = f.child("eval");
    ef.allow_only({"modes", "split", "max_instances"});
    if (ef.has("modes")) {
      std::vector<std::string> modes;
      ef.read("modes", modes);
      c.eval.modes.clear();
      for (const auto& m : modes) {
        try {
          c.eval.modes.push_back(eval::parse_mode(m));
        } catch (const Error&) {
          fail(ErrorKind::kValidation, "eval.modes: unknown mode '" + m + "'");
        }
      }
    }
    if (ef.has("split")) {
      ef.read("split", s);
      try {
        c.eval.split = parse_split(s);
      } catch (const Error&) {
        fail(ErrorKind::kValidation, "eval.split: unknown split '" + s + "'");
      }
    }
    ef.read("max_instances", c.eval.max_instances);
  }

  const bool needs_model = std::any_of(c.stages.begin(), c.stages.end(), [](const auto& st) { return st != "corpus"; });
  if (needs_model && c.model.empty()) fail(ErrorKind::kValidation, "model: base checkpoint path is required");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(read_file(path), path.parent_path());
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json j;
  j["profile"] = to_string(c.profile);
  j["seed"] = c.seed;
  j["out"] = c.out.generic_string();
  j["model"] = c.model.generic_string();
  j["skip_tokens"] = c.skip_tokens.generic_string();
  j["stages"] = c.stages;
  j["corpus"] = {{"source", c.corpus.source}, {"task", c.corpus.task},     {"size", c.corpus.size},
                 {"seed", c.corpus.seed},     {"split", c.corpus.split},   {"split_seed", c.corpus.split_seed},
                 {"path", c.corpus.path.generic_string()}};
  j["bank"] = json::parse(bank::config_to_json(c.bank));
  j["train"] = {{"objectives", c.train.objectives},
                {"dpo", json::parse(train::train_config_to_json(c.train.dpo))},
                {"sft", json::parse(train::train_config_to_json(c.train.sft))}};
  std::vector<std::string> modes;
  for (auto m : c.eval.modes) modes.emplace_back(eval::to_string(m));
  j["eval"] = {{"modes", modes}, {"split", to_string(c.eval.split)}, {"max_instances", c.eval.max_instances}};
  return j.dump(2) + "\n";
}

std::string config_digest(const PipelineConfig& config) {
  // Paths depend on where the tree is checked out; the digest must not.
  PipelineConfig c = config;
  c.out.clear();
  c.model = c.model.filename();
  c.skip_tokens = c.skip_tokens.filename();
  c.corpus.path = c.corpus.path.filename();
  return sha256_hex(pipeline_config_to_json(c));
}

PretrainRecipe toy_pretrain_recipe() {
  PretrainRecipe r;
  r.schedule.steps = 8000;
  return r;
}

toylm::TaskCorpus merged_corpus(const PretrainRecipe& recipe) {
  if (recipe.tasks.size() != recipe.corpus_seeds.size()) {
    fail(ErrorKind::kInvalidArgument, "pretrain recipe: one corpus seed per task");
  }
  toylm::TaskCorpus all;
  for (std::size_t i = 0; i < recipe.tasks.size(); ++i) {
    auto c = toylm::generate_task_corpus(recipe.corpus_seeds[i], recipe.corpus_size,
                                         toylm::profile_by_name(recipe.tasks[i]));
    if (i == 0) all.profile = c.profile, all.seed = c.seed;
    else all.profile += "+" + c.profile;
    all.tasks.insert(all.tasks.end(), c.tasks.begin(), c.tasks.end());
    all.splits.insert(all.splits.end(), c.splits.begin(), c.splits.end());
  }
  return all;
}

toylm::ToyModelState pretrain_base(const PretrainRecipe& recipe, toylm::PretrainReport* report,
                                   const toylm::PretrainLogger& log) {
  Rng init(recipe.schedule.seed, "init");
  auto state = toylm::init_model(recipe.model, init);
  const auto corpus = merged_corpus(recipe);
  auto r = toylm::pretrain_toy(state, corpus, recipe.schedule, log);
  if (report) *report = std::move(r);
  return state;
}

std::unique_ptr<oracle::Oracle> open_oracle(const std::string& spec) {
  if (spec.rfind("toy:", 0) == 0) {
    const fs::path path = spec.substr(4);
    const auto state = toylm::load_checkpoint(path);
    return std::make_unique<oracle::ToyOracle>(state, "toy:" + sha256_file(path).substr(0, 16));
  }
  if (spec.rfind("remote:", 0) == 0) return oracle::open_remote(spec);
  fail(ErrorKind::kInvalidArgument, "oracle must be toy:<checkpoint> or remote:<address>, got '" + spec + "'");
}

bank::PromptFormat toy_prompt_format(const fs::path& skip_tokens) {
  bank::PromptFormat format{&toylm::toy_vocabulary(), &toylm::toy_template(), {}};
  if (!skip_tokens.empty()) {
    format.skips = resolve_skip_set(load_skip_literals(skip_tokens), toylm::toy_vocabulary());
  }
  return format;
}

toylm::TaskCorpus load_any_corpus(const fs::path& path, const bank::BankConfig& config) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open corpus " + path.string());
  std::string first;
  std::getline(in, first);
  if (first.find("\"selfcon-corpus\"") != std::string::npos) return toylm::load_corpus(path);
  return toylm::load_external_dataset(path, toylm::toy_vocabulary(), config.split_ratios, config.split_seed);
}

std::string train_log_jsonl(const train::TrainReport& report) {
  std::string out;
  for (std::size_t i = 0; i < report.step_loss.size(); ++i) {
    out += json{{"step", i + 1}, {"loss", quantize(report.step_loss[i])}}.dump() + "\n";
  }
  return out;
}

std::string train_report_json(const train::TrainReport& r, const std::string& objective, std::size_t examples,
                              const std::string& config_sha) {
  std::vector<double> margins, losses;
  for (double m : r.epoch_margin) margins.push_back(quantize(m));
  for (double l : r.epoch_loss) losses.push_back(quantize(l));
  json j = {{"objective", objective},
            {"examples", examples},
            {"optimizer_steps", r.optimizer_steps},
            {"epoch_loss", losses},
            {"final_loss", quantize(r.final_loss)}};
  if (objective == "dpo") {
    j["epoch_margin"] = margins;
    j["final_margin"] = quantize(r.final_margin);
    j["pair_accuracy"] = quantize(r.pair_accuracy);
  }
  if (!config_sha.empty()) j["config_sha256"] = config_sha;
  return j.dump(2) + "\n";
}

namespace {

struct Artifact {
  std::string stage;
  std::string path;  // relative to the output directory
  std::string sha256;
};

class StageRunner {
 public:
  StageRunner(fs::path out, const Log& log) : out_(std::move(out)), log_(log) {}

  /// Runs `body` unless the stage record matches `input_digest` and every
  /// listed output still has its recorded digest.
  bool run(const std::string& name, const std::string& input_digest, const std::vector<std::string>& outputs,
           const std::function<void()>& body) {
    const fs::path record = out_ / "stages" / (name + ".json");
    if (up_to_date(record, input_digest, outputs)) {
      say("stage " + name + ": up to date, skipped");
      collect(name, outputs);
      return true;
    }
    say("stage " + name + ": running");
    body();
    json j = {{"stage", name}, {"input_digest", input_digest}};
    json outs = json::object();
    for (const auto& o : outputs) {
      if (!fs::exists(out_ / o)) fail(ErrorKind::kIo, "stage " + name + " did not produce " + o);
      outs[o] = sha256_file(out_ / o);
    }
    j["outputs"] = outs;
    write_file(record, j.dump(2) + "\n");
    collect(name, outputs);
    return false;
  }

  std::string digest(const std::string& rel) const { return sha256_file(out_ / rel); }
  const std::vector<Artifact>& artifacts() const { return artifacts_; }
  void say(const std::string& s) const {
    if (log_) log_(s);
  }

 private:
  bool up_to_date(const fs::path& record, const std::string& input_digest,
                  const std::vector<std::string>& outputs) const {
    if (!fs::exists(record)) return false;
    try {
      const json j = json::parse(read_file(record));
      if (j.at("input_digest") != input_digest) return false;
      for (const auto& o : outputs) {
        if (!fs::exists(out_ / o) || j.at("outputs").at(o) != sha256_file(out_ / o)) return false;
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  void collect(const std::string& stage, const std::vector<std::string>& outputs) {
    for (const auto& o : outputs) artifacts_.push_back({stage, o, sha256_file(out_ / o)});
  }

  fs::path out_;
  const Log& log_;
  std::vector<Artifact> artifacts_;
};

bool wants(const PipelineConfig& c, std::string_view stage) {
  return std::find(c.stages.begin(), c.stages.end(), stage) != c.stages.end();
}

bool wants_mode(const PipelineConfig& c, eval::ModeLabel m) {
  return std::find(c.eval.modes.begin(), c.eval.modes.end(), m) != c.eval.modes.end();
}

std::vector<std::string> bank_files(const std::string& dir) {
  return {dir + "/bank.jsonl", dir + "/errors.jsonl", dir + "/summary.json"};
}

std::string digest_of(std::initializer_list<std::string> parts) {
  std::string joined;
  for (const auto& p : parts) joined += p + "\n";
  return sha256_hex(joined);
}

void need(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) fail(ErrorKind::kIo, what + " missing: " + p.string() + " (run the earlier stage first)");
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& c, const Log& log) {
  PipelineResult result;
  result.out = resolve_out(c.out);
  const fs::path out = result.out;
  fs::create_directories(out / "stages");
  const std::string config_sha = config_digest(c);
  write_file(out / "config.json", pipeline_config_to_json(c));
  StageRunner runner(out, log);
  runner.say("pipeline " + out.string() + " config " + config_sha.substr(0, 16));

  const std::string model_sha = c.model.empty() ? std::string() : sha256_file(c.model);
  const std::string skip_sha = c.skip_tokens.empty() ? std::string() : sha256_file(c.skip_tokens);
  const auto format = toy_prompt_format(c.skip_tokens);
  const std::string bank_json = bank::config_to_json(c.bank);
  const std::string corpus_file = "corpus/corpus.jsonl";

  auto load_base = [&] {
    if (c.model.empty()) fail(ErrorKind::kValidation, "model: base checkpoint path is required");
    return toylm::load_checkpoint(c.model);
  };
  auto oracle_label = [&](const std::string& name, const std::string& sha) {
    return name + ":" + sha.substr(0, 16);
  };

  if (wants(c, "corpus")) {
    json cj = json::parse(pipeline_config_to_json(c)).at("corpus");
    cj["path"] = c.corpus.path.filename().generic_string();
    const std::string ext_sha = c.corpus.source == "external" ? sha256_file(c.corpus.path) : std::string();
    const bool skipped = runner.run("corpus", digest_of({cj.dump(), ext_sha}), {corpus_file}, [&] {
      toylm::TaskCorpus corpus;
      if (c.corpus.source == "synthetic") {
        corpus = toylm::generate_task_corpus(c.corpus.seed, c.corpus.size, toylm::profile_by_name(c.corpus.task),
                                             c.corpus.split, c.corpus.split_seed);
      } else {
        corpus = toylm::load_external_dataset(c.corpus.path, toylm::toy_vocabulary(), c.corpus.split,
                                              c.corpus.split_seed);
      }
      fs::create_directories(out / "corpus");
      toylm::save_corpus(corpus, out / corpus_file);
    });
    result.stages.push_back({"corpus", skipped});
  }

  if (wants(c, "bank")) {
    need(out / corpus_file, "corpus");
    const auto files = bank_files("bank");
    const std::string input = digest_of({bank_json, runner.digest(corpus_file), model_sha, skip_sha});
    const bool skipped = runner.run("bank", input, files, [&] {
      const auto corpus = toylm::load_corpus(out / corpus_file);
      const oracle::ToyOracle base(load_base(), oracle_label("base", model_sha));
      runner.say("bank: " + std::string(to_string(c.bank.method)) + " over " + std::to_string(corpus.tasks.size()) +
                 " corpus instances");
      const auto b = bank::build_bank(base, corpus.tasks, corpus.splits, format, c.bank);
      bank::write_bank(b, out / "bank");
      runner.say("bank: " + std::to_string(b.records.size()) + " records, " + std::to_string(b.errors.size()) +
                 " errors");
    });
    result.stages.push_back({"bank", skipped});
  }

  std::map<std::string, std::string> tuned_files;
  for (const auto& o : c.train.objectives) tuned_files[o] = "train/" + o + ".ckpt";

  if (wants(c, "train")) {
    need(out / "bank/bank.jsonl", "bank");
    std::vector<std::string> outputs;
    for (const auto& o : c.train.objectives) {
      outputs.push_back(tuned_files[o]);
      outputs.push_back("train/" + o + "_log.jsonl");
      outputs.push_back("train/" + o + "_summary.json");
    }
    const std::string input = digest_of({json(c.train.objectives).dump(), train::train_config_to_json(c.train.dpo),
                                         train::train_config_to_json(c.train.sft), runner.digest("bank/bank.jsonl"),
                                         model_sha, std::string(alignment::to_string(c.bank.metric))});
    const bool skipped = runner.run("train", input, outputs, [&] {
      const auto b = bank::read_bank(out / "bank");
      const auto pairs = bank::extract_pairs(b.records, c.bank.metric);
      runner.say("train: " + std::to_string(pairs.pairs.size()) + " pairs, " + std::to_string(pairs.skipped) +
                 " records skipped");
      fs::create_directories(out / "train");
      for (const auto& o : c.train.objectives) {
        auto state = load_base();
        train::TrainReport report;
        std::size_t examples = pairs.pairs.size();
        if (o == "dpo") {
          report = train::train_dpo(state, pairs.pairs, c.train.dpo);
        } else {
          const auto ex = train::chosen_examples(pairs.pairs, c.train.sft, toylm::tok::kEos);
          examples = ex.size();
          report = train::train_sft(state, ex, c.train.sft);
        }
        toylm::save_checkpoint(state, out / tuned_files[o]);
        write_file(out / ("train/" + o + "_log.jsonl"), train_log_jsonl(report));
        write_file(out / ("train/" + o + "_summary.json"), train_report_json(report, o, examples, config_sha));
        runner.say("train " + o + ": final loss " + short_decimal(report.final_loss, 6));
      }
    });
    result.stages.push_back({"train", skipped});
  }

  if (wants(c, "eval")) {
    need(out / corpus_file, "corpus");
    bank::BankConfig ecfg = c.bank;
    ecfg.split = c.eval.split;
    ecfg.max_instances = c.eval.max_instances;
    struct Job {
      std::string dir;
      eval::ModeLabel mode;
      std::string model;
    };
    std::vector<Job> jobs;
    if (wants_mode(c, eval::ModeLabel::kBB)) jobs.push_back({"eval/bb", eval::ModeLabel::kBB, ""});
    for (const auto& o : c.train.objectives) {
      if (wants_mode(c, eval::ModeLabel::kBT)) jobs.push_back({"eval/" + o + "_bt", eval::ModeLabel::kBT, o});
      if (wants_mode(c, eval::ModeLabel::kTT)) jobs.push_back({"eval/" + o + "_tt", eval::ModeLabel::kTT, o});
    }
    std::vector<std::string> outputs;
    std::string tuned_digests;
    for (const auto& job : jobs) {
      for (const auto& f : bank_files(job.dir)) outputs.push_back(f);
      outputs.push_back(job.dir + "/report.json");
      if (!job.model.empty()) {
        need(out / tuned_files[job.model], "tuned checkpoint");
        tuned_digests += job.model + "=" + runner.digest(tuned_files[job.model]) + ";";
      }
    }
    outputs.insert(outputs.end(), {"eval/table_cc_sp.txt", "eval/table_cc_cos.txt", "eval/rank_separation.json"});
    const std::string input =
        digest_of({bank::config_to_json(ecfg), runner.digest(corpus_file), model_sha, skip_sha, tuned_digests,
                   json(outputs).dump(), fs::exists(out / "bank/bank.jsonl") ? runner.digest("bank/bank.jsonl") : ""});
    const bool skipped = runner.run("eval", input, outputs, [&] {
      const auto corpus = toylm::load_corpus(out / corpus_file);
      const oracle::ToyOracle base(load_base(), oracle_label("base", model_sha));
      std::map<std::string, std::unique_ptr<oracle::ToyOracle>> tuned;
      std::vector<eval::EvalReport> reports;
      for (const auto& job : jobs) {
        const oracle::Oracle* decider = &base;
        const oracle::Oracle* explainer = &base;
        if (!job.model.empty()) {
          auto& t = tuned[job.model];
          if (!t) {
            const fs::path p = out / tuned_files[job.model];
            t = std::make_unique<oracle::ToyOracle>(toylm::load_checkpoint(p),
                                                    oracle_label(job.model, sha256_file(p)));
          }
          explainer = t.get();
          if (job.mode == eval::ModeLabel::kTT) decider = t.get();
        }
        runner.say("eval " + job.dir);
        const auto b = bank::build_bank(*decider, *explainer, corpus.tasks, corpus.splits, format, ecfg);
        bank::write_bank(b, out / job.dir);
        auto report = eval::report_from_bank(job.mode, b);
        report.model = job.model;
        report.provenance = "decider=" + decider->id() + " explainer=" + explainer->id() + " config=" + config_sha;
        write_file(out / (job.dir + "/report.json"), eval::report_to_json(report));
        reports.push_back(std::move(report));
      }
      write_file(out / "eval/table_cc_sp.txt", eval::render_report_table(reports, alignment::Metric::kCcSp));
      write_file(out / "eval/table_cc_cos.txt", eval::render_report_table(reports, alignment::Metric::kCcCos));
      if (fs::exists(out / "bank/bank.jsonl")) {
        const auto b = bank::read_bank(out / "bank");
        write_file(out / "eval/rank_separation.json",
                   eval::rank_separation_to_json(eval::rank_separation(b.records, alignment::Metric::kCcSp),
                                                 eval::rank_separation(b.records, alignment::Metric::kCcCos)));
      } else {
        write_file(out / "eval/rank_separation.json", "{}\n");
      }
    });
    result.stages.push_back({"eval", skipped});
  }

  json artifacts = json::array();
  for (const auto& a : runner.artifacts()) artifacts.push_back({{"stage", a.stage}, {"path", a.path}, {"sha256", a.sha256}});
  const json manifest = {{"format", "selfcon-manifest"},
                         {"version", 1},
                         {"profile", to_string(c.profile)},
                         {"config_sha256", config_sha},
                         {"artifacts", artifacts}};
  result.manifest = out / "manifest.json";
  write_file(result.manifest, manifest.dump(2) + "\n");
  runner.say("manifest " + result.manifest.string() + " (" + std::to_string(artifacts.size()) + " artifacts)");
  return result;
}

}  // namespace selfcon::cli
