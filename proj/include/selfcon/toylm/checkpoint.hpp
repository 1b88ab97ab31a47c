#pragma once

#include <filesystem>

#include "selfcon/toylm/model.hpp"

namespace selfcon::toylm {

/// Container: magic line, one-line JSON header (config, tensor table, adapter
/// shape, seeds), then little-endian float64 payload (base, then adapter).
inline constexpr const char* kCheckpointMagic = "SELFCON-CHECKPOINT v1";

void save_checkpoint(const ToyModelState& state, const std::filesystem::path& path);
ToyModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace selfcon::toylm
