#pragma once

#include <filesystem>
#include <memory>

#include "selfcon/cli/pipeline.hpp"
#include "selfcon/oracle/toy_oracle.hpp"
#include "selfcon/toylm/checkpoint.hpp"

namespace fixtures {

inline std::filesystem::path source_dir() { return SELFCON_SOURCE_DIR; }
inline std::filesystem::path base_checkpoint() { return source_dir() / "fixtures" / "toy_base.ckpt"; }
inline std::filesystem::path toy_skip_tokens() { return source_dir() / "configs" / "toy_skip_tokens.txt"; }

inline const selfcon::toylm::ToyModelState& base_state() {
  static const auto state = selfcon::toylm::load_checkpoint(base_checkpoint());
  return state;
}

inline const selfcon::oracle::ToyOracle& base_oracle() {
  static const selfcon::oracle::ToyOracle oracle(base_state(), "base");
  return oracle;
}

inline const selfcon::bank::PromptFormat& toy_format() {
  static const auto format = selfcon::cli::toy_prompt_format(toy_skip_tokens());
  return format;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("selfcon_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
