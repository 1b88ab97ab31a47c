#include "selfcon/toylm/tasks.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::toylm {

using nlohmann::json;

const Vocabulary& toy_vocabulary() {
  static const Vocabulary vocab = [] {
    std::vector<std::string> pieces = {"<pad>",   "<bos>", "<eos>", "<nl>",         "Question:", "Choose",  "Answer:",
                                       "Selected", "Why",   "Explanation:", ".", ",", "->", "because",
                                       "A",       "B",     "C",     "D",            "E"};
    for (int i = 0; static_cast<int>(pieces.size()) < 128; ++i) pieces.push_back("w" + std::to_string(i));
    return Vocabulary(std::move(pieces));
  }();
  return vocab;
}

const PromptTemplate& toy_template() {
  static const PromptTemplate tpl = [] {
    const Vocabulary& v = toy_vocabulary();
    PromptTemplate t;
    t.begin = {v.id("<bos>")};
    t.question_header = {v.id("Question:")};
    t.newline = {v.id("<nl>")};
    t.choose_line = {v.id("Choose")};
    t.option_letters = {v.id("A"), v.id("B"), v.id("C"), v.id("D"), v.id("E")};
    t.answer_marker = {v.id("Answer:")};
    t.selected_marker = {v.id("Selected")};
    t.why_line = {v.id("Why")};
    t.explanation_marker = {v.id("Explanation:")};
    t.eos = v.id("<eos>");
    t.pad = v.id("<pad>");
    return t;
  }();
  return tpl;
}

int TaskProfile::gold_answer(int key) const {
  std::vector<int> perm(static_cast<std::size_t>(answer_count));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mapping_seed, "answer-map");
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm[static_cast<std::size_t>(key) % perm.size()];
}

int TaskProfile::taught_answer(int key) const {
  if (key < misconceptions) return gold_answer((key + 1) % key_count);
  return gold_answer(key);
}

void TaskProfile::validate() const {
  const int words = static_cast<int>(toy_vocabulary().size()) - tok::kFirstWord;
  auto in_range = [&](int first, int count) { return first >= 0 && count > 0 && first + count <= words; };
  if (!in_range(key_first, key_count) || !in_range(answer_first, answer_count) ||
      !in_range(distractor_first, distractor_count)) {
    fail(ErrorKind::kValidation, "task profile word ranges exceed the vocabulary");
  }
  if (answer_count < option_count || answer_count < key_count) {
    fail(ErrorKind::kValidation, "task profile needs at least as many answers as keys and options");
  }
  if (misconceptions < 0 || misconceptions >= key_count) {
    fail(ErrorKind::kValidation, "task profile misconception count out of range");
  }
  if (question_length < 1 || distractor_count < question_length - 1) {
    fail(ErrorKind::kValidation, "task profile question length not satisfiable");
  }
  if (option_count < 2 || option_count > static_cast<int>(toy_template().option_letters.size())) {
    fail(ErrorKind::kValidation, "task profile option count out of range");
  }
}

TaskProfile profile_by_name(std::string_view name) {
  TaskProfile p;
  if (name == "alpha") return p;
  if (name == "beta") {
    p.name = "beta";
    p.key_first = 56;
    p.answer_first = 72;
    p.distractor_first = 88;
    p.distractor_count = 21;
    p.mapping_seed = 11;
    return p;
  }
  fail(ErrorKind::kValidation, "unknown task profile '" + std::string(name) + "'");
}

std::vector<std::size_t> TaskCorpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

TaskCorpus generate_task_corpus(std::uint64_t seed, std::size_t n, const TaskProfile& profile) {
  const std::array<double, 3> ratios = {0.7, 0.2, 0.1};
  return generate_task_corpus(seed, n, profile, ratios, seed);
}

TaskCorpus generate_task_corpus(std::uint64_t seed, std::size_t n, const TaskProfile& profile,
                                std::span<const double> split_ratios, std::uint64_t split_seed) {
  if (n == 0) fail(ErrorKind::kInvalidArgument, "corpus size must be >= 1");
  profile.validate();
  TaskCorpus corpus;
  corpus.profile = profile.name;
  corpus.seed = seed;
  Rng rng(seed, "corpus/" + profile.name);
  for (std::size_t i = 0; i < n; ++i) {
    Rng trng = rng.split(i);
    SyntheticTask task;
    task.id = i;
    task.profile = profile.name;
    const int key = static_cast<int>(trng.below(static_cast<std::uint64_t>(profile.key_count)));
    const int key_pos = static_cast<int>(trng.below(static_cast<std::uint64_t>(profile.question_length)));
    std::vector<int> distractors(static_cast<std::size_t>(profile.distractor_count));
    std::iota(distractors.begin(), distractors.end(), 0);
    for (int j = 0; j < profile.question_length - 1; ++j) {
      const auto pick = static_cast<std::size_t>(j) + trng.below(distractors.size() - static_cast<std::size_t>(j));
      std::swap(distractors[static_cast<std::size_t>(j)], distractors[pick]);
    }
    int d = 0;
    for (int j = 0; j < profile.question_length; ++j) {
      task.question.push_back(j == key_pos ? profile.key_token(key) : profile.distractor_token(distractors[static_cast<std::size_t>(d++)]));
    }
    task.key_positions = {key_pos};

    const int gold_word = profile.gold_answer(key);
    std::vector<int> words = {gold_word};
    if (const int taught = profile.taught_answer(key); taught != gold_word) words.push_back(taught);
    while (static_cast<int>(words.size()) < profile.option_count) {
      const int w = static_cast<int>(trng.below(static_cast<std::uint64_t>(profile.answer_count)));
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    for (std::size_t j = words.size(); j > 1; --j) std::swap(words[j - 1], words[trng.below(j)]);
    for (std::size_t j = 0; j < words.size(); ++j) {
      task.options.push_back({profile.answer_token(words[j])});
      if (words[j] == gold_word) task.gold = static_cast<int>(j);
    }
    corpus.tasks.push_back(std::move(task));
  }
  corpus.splits = assign_splits(n, split_ratios, Rng(split_seed, "split"));
  return corpus;
}

int key_index(const SyntheticTask& task, const TaskProfile& profile) {
  for (int pos : task.key_positions) {
    const TokenId t = task.question.at(static_cast<std::size_t>(pos));
    const int idx = t - profile.key_token(0);
    if (idx >= 0 && idx < profile.key_count) return idx;
  }
  return -1;
}

void save_corpus(const TaskCorpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  out << json{{"format", "selfcon-corpus"}, {"version", 1}, {"profile", corpus.profile}, {"seed", corpus.seed},
              {"size", corpus.tasks.size()}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < corpus.tasks.size(); ++i) {
    const auto& t = corpus.tasks[i];
    out << json{{"id", t.id},           {"split", to_string(corpus.splits[i])}, {"question", t.question},
                {"options", t.options}, {"gold", t.gold},                       {"key_positions", t.key_positions},
                {"profile", t.profile}}
               .dump()
        << '\n';
  }
  write_file(path, out.str());
}

TaskCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open corpus " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kParse, "empty corpus file " + path.string());
  TaskCorpus corpus;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "selfcon-corpus" || header.at("version") != 1) {
      fail(ErrorKind::kParse, "not a version-1 corpus file: " + path.string());
    }
    corpus.profile = header.at("profile").get<std::string>();
    corpus.seed = header.at("seed").get<std::uint64_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      SyntheticTask t;
      t.id = r.at("id").get<std::uint64_t>();
      t.question = r.at("question").get<std::vector<TokenId>>();
      t.options = r.at("options").get<std::vector<std::vector<TokenId>>>();
      t.gold = r.at("gold").get<int>();
      t.key_positions = r.at("key_positions").get<std::vector<int>>();
      t.profile = r.at("profile").get<std::string>();
      corpus.tasks.push_back(std::move(t));
      corpus.splits.push_back(parse_split(r.at("split").get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, "malformed corpus " + path.string() + ": " + e.what());
  }
  return corpus;
}

namespace {

std::vector<TokenId> tokens_field(const json& j, const Vocabulary& vocab) {
  if (j.is_string()) {
    auto seq = vocab.encode(j.get<std::string>());
    return {seq.tokens().begin(), seq.tokens().end()};
  }
  auto ids = j.get<std::vector<TokenId>>();
  for (TokenId t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab.size()) fail(ErrorKind::kParse, "token id outside vocabulary");
  }
  return ids;
}

}  // namespace

TaskCorpus load_external_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                 std::span<const double> split_ratios, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open dataset " + path.string());
  TaskCorpus corpus;
  corpus.profile = "external";
  corpus.seed = split_seed;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      SyntheticTask t;
      t.id = corpus.tasks.size();
      t.profile = "external";
      t.question = tokens_field(r.at("question"), vocab);
      for (const auto& o : r.at("options")) t.options.push_back(tokens_field(o, vocab));
      const json& gold = r.at("gold");
      if (gold.is_string()) {
        const std::string g = gold.get<std::string>();
        if (g.size() != 1 || g[0] < 'A' || g[0] > 'Z') fail(ErrorKind::kParse, "gold letter must be A-Z");
        t.gold = g[0] - 'A';
      } else {
        t.gold = gold.get<int>();
      }
      if (t.gold < 0 || t.gold >= static_cast<int>(t.options.size())) fail(ErrorKind::kParse, "gold out of range");
      corpus.tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  corpus.splits = assign_splits(corpus.tasks.size(), split_ratios, Rng(split_seed, "split"));
  return corpus;
}

}  // namespace selfcon::toylm
