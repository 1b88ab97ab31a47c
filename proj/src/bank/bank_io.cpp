#include <fstream>
#include <sstream>

#include "json.hpp"
#include "selfcon/bank/bank.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/json_fields.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::bank {

using nlohmann::json;

namespace {

constexpr int kBankVersion = 1;

json sample_json(const oracle::SampleParams& p) {
  return {{"top_p", p.top_p}, {"temperature", p.temperature}, {"max_tokens", p.max_tokens}, {"greedy", p.greedy}};
}

json vector_json(const AttributionVector& v) {
  return {{"method", to_string(v.method)}, {"target_slp", v.target_slp}, {"scores", v.scores}};
}

AttributionVector vector_from(const json& j, const std::vector<bool>& mask) {
  AttributionVector v;
  v.method = parse_attribution_method(j.at("method").get<std::string>());
  v.target_slp = j.at("target_slp").get<double>();
  v.scores = j.at("scores").get<std::vector<double>>();
  v.skip_mask = mask;
  v.validate();
  return v;
}

json ranking_json(const alignment::ExplanationRanking& r) {
  json scores = json::array();
  for (const auto& s : r.scores) {
    scores.push_back({{"value", quantize(s.value)}, {"effective_m", s.effective_m}, {"degenerate", s.degenerate}});
  }
  return {{"scores", scores}, {"best", r.best}, {"worst", r.worst}, {"degenerate", r.degenerate_count}};
}

alignment::ExplanationRanking ranking_from(const json& j, alignment::Metric metric) {
  alignment::ExplanationRanking r;
  for (const auto& s : j.at("scores")) {
    r.scores.push_back({metric, s.at("value").get<double>(), s.at("effective_m").get<std::size_t>(),
                        s.at("degenerate").get<bool>()});
  }
  r.best = j.at("best").get<std::size_t>();
  r.worst = j.at("worst").get<std::size_t>();
  r.degenerate_count = j.at("degenerate").get<std::size_t>();
  return r;
}

json stat_json(const AggregateStat& s) {
  return {{"worst", quantize(s.worst)},       {"mean", quantize(s.mean)},         {"best", quantize(s.best)},
          {"worst_se", quantize(s.worst_se)}, {"mean_se", quantize(s.mean_se)}, {"best_se", quantize(s.best_se)}};
}

std::optional<TokenId> optional_token(const JsonFields& f, std::string_view key) {
  if (!f.has(key) || f.at(key).is_null()) return std::nullopt;
  TokenId t = 0;
  f.read(key, t);
  return t;
}

}  // namespace

std::string config_to_json(const BankConfig& c) {
  json j;
  j["k"] = c.k;
  j["metric"] = alignment::to_string(c.metric);
  j["method"] = to_string(c.method);
  j["lime"] = {{"n_samples", c.lime.n_samples},
               {"baseline", c.lime.baseline ? json(*c.lime.baseline) : json(nullptr)},
               {"kernel_width", c.lime.kernel_width},
               {"ridge", c.lime.ridge},
               {"mask", c.lime.mask == attribution::MaskDistribution::kUniformCount ? "uniform_count" : "bernoulli"}};
  j["lig"] = {{"steps", c.lig.steps},
              {"baseline", c.lig.baseline == attribution::LigBaseline::kPadEmbedding ? "pad_embedding" : "zero_embedding"},
              {"quadrature", c.lig.quadrature == attribution::Quadrature::kTrapezoid ? "trapezoid" : "riemann_left"}};
  j["kshap"] = {{"n_samples", c.kshap.n_samples},
                {"baseline", c.kshap.baseline ? json(*c.kshap.baseline) : json(nullptr)}};
  j["attribution_seed"] = c.attribution_seed;
  j["sample"] = sample_json(c.sample);
  j["explanation_seeds"] = c.explanation_seeds;
  j["decision_max_tokens"] = c.decision_max_tokens;
  j["decision_target"] = c.decision_target == DecisionTarget::kFullAnswer ? "full_answer" : "letter_only";
  j["split_ratios"] = c.split_ratios;
  j["split_seed"] = c.split_seed;
  j["split"] = c.split ? json(std::string(to_string(*c.split))) : json("all");
  j["max_instances"] = c.max_instances;
  j["threads"] = c.threads;
  return j.dump();
}

BankConfig config_from_json(std::string_view text) {
  const json j = parse_json(text, "bank config");
  return config_from_fields(JsonFields(j, "bank"), BankConfig{});
}

BankConfig config_from_fields(const JsonFields& f, BankConfig c) {
  f.allow_only({"k", "metric", "method", "lime", "lig", "kshap", "attribution_seed", "sample", "explanation_seeds",
                "decision_max_tokens", "decision_target", "split_ratios", "split_seed", "split", "max_instances",
                "threads"});
  f.read("k", c.k);
  if (!f.has("explanation_seeds") && f.has("k")) {
    c.explanation_seeds.clear();
    for (int i = 0; i < c.k; ++i) c.explanation_seeds.push_back(42 + static_cast<std::uint64_t>(i));
  }
  std::string text;
  if (f.has("metric")) {
    f.read("metric", text);
    c.metric = alignment::parse_metric(text);
  }
  if (f.has("method")) {
    f.read("method", text);
    c.method = parse_attribution_method(text);
  }
  if (f.has("lime")) {
    const auto l = f.child("lime");
    l.allow_only({"n_samples", "baseline", "kernel_width", "ridge", "mask"});
    l.read("n_samples", c.lime.n_samples);
    c.lime.baseline = optional_token(l, "baseline");
    l.read("kernel_width", c.lime.kernel_width);
    l.read("ridge", c.lime.ridge);
    if (l.has("mask")) {
      l.read("mask", text);
      if (text == "uniform_count") c.lime.mask = attribution::MaskDistribution::kUniformCount;
      else if (text == "bernoulli") c.lime.mask = attribution::MaskDistribution::kBernoulli;
      else fail(ErrorKind::kValidation, "bad value for '" + l.path("mask") + "'");
    }
  }
  if (f.has("lig")) {
    const auto l = f.child("lig");
    l.allow_only({"steps", "baseline", "quadrature"});
    l.read("steps", c.lig.steps);
    if (l.has("baseline")) {
      l.read("baseline", text);
      if (text == "pad_embedding") c.lig.baseline = attribution::LigBaseline::kPadEmbedding;
      else if (text == "zero_embedding") c.lig.baseline = attribution::LigBaseline::kZeroEmbedding;
      else fail(ErrorKind::kValidation, "bad value for '" + l.path("baseline") + "'");
    }
    if (l.has("quadrature")) {
      l.read("quadrature", text);
      if (text == "trapezoid") c.lig.quadrature = attribution::Quadrature::kTrapezoid;
      else if (text == "riemann_left") c.lig.quadrature = attribution::Quadrature::kRiemannLeft;
      else fail(ErrorKind::kValidation, "bad value for '" + l.path("quadrature") + "'");
    }
  }
  if (f.has("kshap")) {
    const auto l = f.child("kshap");
    l.allow_only({"n_samples", "baseline"});
    l.read("n_samples", c.kshap.n_samples);
    c.kshap.baseline = optional_token(l, "baseline");
  }
  f.read("attribution_seed", c.attribution_seed);
  if (f.has("sample")) {
    const auto s = f.child("sample");
    s.allow_only({"top_p", "temperature", "max_tokens", "greedy"});
    s.read("top_p", c.sample.top_p);
    s.read("temperature", c.sample.temperature);
    s.read("max_tokens", c.sample.max_tokens);
    s.read("greedy", c.sample.greedy);
  }
  f.read("explanation_seeds", c.explanation_seeds);
  f.read("decision_max_tokens", c.decision_max_tokens);
  if (f.has("decision_target")) {
    f.read("decision_target", text);
    if (text == "full_answer") c.decision_target = DecisionTarget::kFullAnswer;
    else if (text == "letter_only") c.decision_target = DecisionTarget::kLetterOnly;
    else fail(ErrorKind::kValidation, "bad value for '" + f.path("decision_target") + "'");
  }
  f.read("split_ratios", c.split_ratios);
  f.read("split_seed", c.split_seed);
  if (f.has("split")) {
    f.read("split", text);
    if (text == "all") c.split.reset();
    else c.split = parse_split(text);
  }
  f.read("max_instances", c.max_instances);
  f.read("threads", c.threads);
  c.validate();
  return c;
}

std::string record_to_json(const BankRecord& r) {
  json j;
  j["id"] = r.id;
  j["profile"] = r.profile;
  j["split"] = to_string(r.split);
  j["gold"] = r.gold;
  std::vector<int> skip;
  for (bool b : r.x.skip_mask()) skip.push_back(b ? 1 : 0);
  j["x"] = {{"tokens", std::vector<TokenId>(r.x.tokens().begin(), r.x.tokens().end())},
            {"pieces", r.x.pieces()},
            {"skip", skip}};
  j["decision"] = {{"tokens", r.decision.tokens},
                   {"option", r.decision.option ? json(*r.decision.option) : json(nullptr)},
                   {"correct", r.decision.correct}};
  j["context"] = r.context;
  j["explanations"] = r.explanations;
  j["dec_attr"] = vector_json(r.dec_attr);
  json exps = json::array();
  for (const auto& v : r.exp_attrs) exps.push_back(vector_json(v));
  j["exp_attrs"] = exps;
  j["alignment"] = {{"cc_sp", ranking_json(r.sp)}, {"cc_cos", ranking_json(r.cos)}};
  return j.dump();
}

BankRecord record_from_json(std::string_view line) {
  const json j = parse_json(line, "bank record");
  try {
    BankRecord r;
    r.id = j.at("id").get<std::uint64_t>();
    r.profile = j.at("profile").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.gold = j.at("gold").get<int>();
    std::vector<bool> mask;
    for (int b : j.at("x").at("skip").get<std::vector<int>>()) mask.push_back(b != 0);
    r.x = TokenSequence(j.at("x").at("tokens").get<std::vector<TokenId>>(),
                        j.at("x").at("pieces").get<std::vector<std::string>>(), mask);
    const auto& d = j.at("decision");
    r.decision.tokens = d.at("tokens").get<std::vector<TokenId>>();
    if (!d.at("option").is_null()) r.decision.option = d.at("option").get<int>();
    r.decision.correct = d.at("correct").get<bool>();
    r.context = j.at("context").get<std::vector<TokenId>>();
    r.explanations = j.at("explanations").get<std::vector<std::vector<TokenId>>>();
    r.dec_attr = vector_from(j.at("dec_attr"), mask);
    for (const auto& v : j.at("exp_attrs")) r.exp_attrs.push_back(vector_from(v, mask));
    r.sp = ranking_from(j.at("alignment").at("cc_sp"), alignment::Metric::kCcSp);
    r.cos = ranking_from(j.at("alignment").at("cc_cos"), alignment::Metric::kCcCos);
    if (r.exp_attrs.size() != r.explanations.size() || r.sp.scores.size() != r.explanations.size() ||
        r.cos.scores.size() != r.explanations.size()) {
      fail(ErrorKind::kParse, "bank record " + std::to_string(r.id) + ": explanation counts disagree");
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("bank record: ") + e.what());
  }
}

std::string summary_to_json(const BankSummary& s) {
  json j;
  j["records"] = s.records;
  j["errors"] = s.errors;
  j["parse_failures"] = s.parse_failures;
  j["correct"] = s.correct;
  j["accuracy"] = quantize(s.accuracy);
  j["cc_sp"] = stat_json(s.sp);
  j["cc_cos"] = stat_json(s.cos);
  j["degenerate"] = {{"cc_sp", s.degenerate_sp}, {"cc_cos", s.degenerate_cos}};
  return j.dump(2) + "\n";
}

void write_bank(const Bank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string out;
  json header = {{"format", "selfcon-bank"},
                 {"version", kBankVersion},
                 {"oracle", bank.oracle_id},
                 {"config", json::parse(bank.config_json)},
                 {"records", bank.records.size()}};
  out += header.dump() + "\n";
  for (const auto& r : bank.records) out += record_to_json(r) + "\n";
  write_file(dir / "bank.jsonl", out);

  std::string errors;
  for (const auto& e : bank.errors) {
    errors += json{{"id", e.id}, {"kind", e.kind}, {"message", e.message}}.dump() + "\n";
  }
  write_file(dir / "errors.jsonl", errors);
  write_file(dir / "summary.json", summary_to_json(summarize(bank.records, bank.errors.size())));
}

Bank read_bank(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "bank.jsonl" : dir;
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kParse, path.string() + ": empty bank file");
  const json header = parse_json(line, "bank header");
  if (header.value("format", "") != "selfcon-bank") fail(ErrorKind::kParse, path.string() + ": not a bank file");
  if (header.value("version", 0) != kBankVersion) {
    fail(ErrorKind::kParse, path.string() + ": unsupported bank version " + header.at("version").dump());
  }
  Bank bank;
  bank.oracle_id = header.at("oracle").get<std::string>();
  bank.config_json = header.at("config").dump();
  while (std::getline(in, line)) {
    if (!line.empty()) bank.records.push_back(record_from_json(line));
  }
  const auto errors_path = path.parent_path() / "errors.jsonl";
  if (std::filesystem::exists(errors_path)) {
    std::istringstream err(read_file(errors_path));
    while (std::getline(err, line)) {
      if (line.empty()) continue;
      const json e = parse_json(line, "bank error");
      bank.errors.push_back({e.at("id").get<std::uint64_t>(), e.at("kind").get<std::string>(),
                             e.at("message").get<std::string>()});
    }
  }
  return bank;
}

}  // namespace selfcon::bank
