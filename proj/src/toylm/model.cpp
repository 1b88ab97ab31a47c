#include "selfcon/toylm/model.hpp"

#include <cmath>

#include "selfcon/core/error.hpp"
#include "selfcon/toylm/tape.hpp"

namespace selfcon::toylm {

void ToyConfig::validate() const {
  if (layers < 1 || width < 1 || heads < 1 || vocab < 2 || context < 2 || mlp_hidden < 1) {
    fail(ErrorKind::kInvalidArgument, "ToyConfig: sizes must be positive");
  }
  if (width % heads != 0) fail(ErrorKind::kInvalidArgument, "ToyConfig: width must be divisible by heads");
}

void ParamLayout::add(std::string name, int rows, int cols) {
  ParamEntry e{std::move(name), total_, rows, cols};
  total_ += e.size();
  entries_.push_back(std::move(e));
}

const ParamEntry& ParamLayout::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  fail(ErrorKind::kInvalidArgument, "ParamLayout: no parameter named '" + std::string(name) + "'");
}

namespace {

std::pair<int, int> projection_shape(const ToyConfig& c, std::string_view proj) {
  if (proj == "gate" || proj == "up") return {c.width, c.mlp_hidden};
  if (proj == "down") return {c.mlp_hidden, c.width};
  return {c.width, c.width};
}

std::string layer_name(int layer, std::string_view what) {
  return "l" + std::to_string(layer) + "." + std::string(what);
}

}  // namespace

ParamLayout base_layout(const ToyConfig& config) {
  config.validate();
  ParamLayout layout;
  layout.add("tok_emb", config.vocab, config.width);
  layout.add("pos_emb", config.context, config.width);
  for (int l = 0; l < config.layers; ++l) {
    layout.add(layer_name(l, "attn_norm"), 1, config.width);
    for (const char* p : {"q", "k", "v", "o"}) {
      auto [r, c] = projection_shape(config, p);
      layout.add(layer_name(l, p), r, c);
    }
    layout.add(layer_name(l, "mlp_norm"), 1, config.width);
    for (const char* p : {"gate", "up", "down"}) {
      auto [r, c] = projection_shape(config, p);
      layout.add(layer_name(l, p), r, c);
    }
  }
  layout.add("final_norm", 1, config.width);
  layout.add("out", config.width, config.vocab);
  return layout;
}

ParamLayout adapter_layout(const ToyConfig& config, int rank) {
  if (rank < 1) fail(ErrorKind::kInvalidArgument, "adapter rank must be >= 1");
  ParamLayout layout;
  for (int l = 0; l < config.layers; ++l) {
    for (const char* p : kAdaptedProjections) {
      auto [r, c] = projection_shape(config, p);
      layout.add(layer_name(l, p) + ".lora_a", r, rank);
      layout.add(layer_name(l, p) + ".lora_b", rank, c);
    }
  }
  return layout;
}

std::span<const double> ToyModelState::param(std::string_view name) const {
  const auto& e = layout.at(name);
  return {base.data() + e.offset, e.size()};
}

std::span<double> ToyModelState::param(std::string_view name) {
  const auto& e = layout.at(name);
  return {base.data() + e.offset, e.size()};
}

ToyModelState init_model(const ToyConfig& config, Rng& rng) {
  ToyModelState state;
  state.config = config;
  state.layout = base_layout(config);
  state.base.assign(state.layout.total(), 0.0);
  state.seeds = {rng.seed(), rng.stream()};
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.layers);
  for (const auto& e : state.layout.entries()) {
    double* p = state.base.data() + e.offset;
    const bool is_norm = e.name.find("norm") != std::string::npos;
    if (is_norm) {
      for (std::size_t i = 0; i < e.size(); ++i) p[i] = 1.0;
      continue;
    }
    double std_dev = 1.0 / std::sqrt(static_cast<double>(e.rows));
    if (e.name == "tok_emb" || e.name == "pos_emb") std_dev = 0.5;
    if (e.name.ends_with(".o") || e.name.ends_with(".down")) std_dev *= residual_scale;
    if (e.name == "out") std_dev = 0.02;
    for (std::size_t i = 0; i < e.size(); ++i) p[i] = std_dev * rng.normal();
  }
  return state;
}

void attach_adapter(ToyModelState& state, int rank, double alpha, Rng& rng) {
  Adapter ad;
  ad.rank = rank;
  ad.alpha = alpha;
  ad.layout = adapter_layout(state.config, rank);
  ad.params.assign(ad.layout.total(), 0.0);
  for (const auto& e : ad.layout.entries()) {
    if (!e.name.ends_with(".lora_a")) continue;
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(e.rows));
    double* p = ad.params.data() + e.offset;
    for (std::size_t i = 0; i < e.size(); ++i) p[i] = std_dev * rng.normal();
  }
  state.adapter = std::move(ad);
  state.seeds.push_back(rng.seed());
}

ToyModelState merge_adapter(const ToyModelState& state) {
  ToyModelState merged = without_adapter(state);
  if (!state.adapter) return merged;
  const Adapter& ad = *state.adapter;
  const double s = ad.scale();
  for (int l = 0; l < state.config.layers; ++l) {
    for (const char* p : kAdaptedProjections) {
      const std::string name = "l" + std::to_string(l) + "." + p;
      const auto& w = merged.layout.at(name);
      const auto& a = ad.layout.at(name + ".lora_a");
      const auto& b = ad.layout.at(name + ".lora_b");
      std::vector<double> delta(w.size(), 0.0);
      kernels::gemm_nn_acc(ad.params.data() + a.offset, ad.params.data() + b.offset, delta.data(), a.rows, a.cols,
                           b.cols);
      double* pw = merged.base.data() + w.offset;
      for (std::size_t i = 0; i < w.size(); ++i) pw[i] += s * delta[i];
    }
  }
  return merged;
}

ToyModelState without_adapter(const ToyModelState& state) {
  ToyModelState copy;
  copy.config = state.config;
  copy.layout = state.layout;
  copy.base = state.base;
  copy.seeds = state.seeds;
  return copy;
}

}  // namespace selfcon::toylm
