#include "selfcon/core/skip_tokens.hpp"

#include <fstream>

#include "selfcon/core/error.hpp"

namespace selfcon {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::set<std::string> llama3_skip_literals() {
  return {"<|start_header_id|>", "<|end_header_id|>", "<|eot_id|>", "<|begin_of_text|>",
          "\xC4\x8A",  // newline marker
          "\xC4\xA0->"};
}

std::set<std::string> load_skip_literals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open skip-token file " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (!line.empty()) out.insert(line);
  }
  return out;
}

SkipTokenSet resolve_skip_set(const std::set<std::string>& literals, const Vocabulary& vocab) {
  if (vocab.empty()) fail(ErrorKind::kInvalidArgument, "resolve_skip_set: empty vocabulary");
  SkipTokenSet out;
  out.literals = literals;
  for (const auto& lit : literals) {
    if (auto id = vocab.find(lit)) {
      out.ids.insert(*id);
    } else {
      out.unresolved.push_back(lit);
    }
  }
  return out;
}

TokenSequence apply_skip_mask(const TokenSequence& seq, const SkipTokenSet& skips) {
  std::vector<bool> mask(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) mask[i] = skips.contains(seq[i]);
  return seq.with_skip_mask(std::move(mask));
}

}  // namespace selfcon
