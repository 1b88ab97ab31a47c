#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfcon/core/rng.hpp"
#include "selfcon/core/token_sequence.hpp"

namespace selfcon::toylm {

struct ToyConfig {
  int layers = 2;
  int width = 64;
  int heads = 2;
  int vocab = 128;
  int context = 128;
  int mlp_hidden = 128;  // SwiGLU hidden size
  double rms_eps = 1e-5;

  void validate() const;
  friend bool operator==(const ToyConfig&, const ToyConfig&) = default;
};

struct ParamEntry {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Named views into one flat parameter array.
class ParamLayout {
 public:
  void add(std::string name, int rows, int cols);
  const ParamEntry& at(std::string_view name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

/// The seven adapted projections of each layer.
inline constexpr std::array<const char*, 7> kAdaptedProjections = {"q", "k", "v", "o", "gate", "up", "down"};

ParamLayout base_layout(const ToyConfig& config);
ParamLayout adapter_layout(const ToyConfig& config, int rank);

/// Low-rank deltas: effective W = W + (alpha / rank) * A * B for every
/// adapted projection. B starts at zero, so a fresh adapter is an identity.
struct Adapter {
  int rank = 8;
  double alpha = 8.0;
  ParamLayout layout;
  std::vector<double> params;

  double scale() const { return alpha / static_cast<double>(rank); }
};

struct ToyModelState {
  ToyConfig config;
  ParamLayout layout;
  std::vector<double> base;
  std::optional<Adapter> adapter;
  std::vector<std::uint64_t> seeds;  // provenance of the initialization / training

  std::span<const double> param(std::string_view name) const;
  std::span<double> param(std::string_view name);
};

ToyModelState init_model(const ToyConfig& config, Rng& rng);
/// Adds a fresh adapter (A ~ N(0, 1/in), B = 0).
void attach_adapter(ToyModelState& state, int rank, double alpha, Rng& rng);
/// Folds the adapter into the base weights; the result carries no adapter.
ToyModelState merge_adapter(const ToyModelState& state);
/// Copy with the adapter removed (the frozen reference policy).
ToyModelState without_adapter(const ToyModelState& state);

}  // namespace selfcon::toylm
