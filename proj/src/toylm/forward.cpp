#include "selfcon/toylm/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "selfcon/core/error.hpp"

namespace selfcon::toylm {
namespace {

using Var = Tape::Var;

struct Builder {
  const ToyModelState& state;
  const GraphOptions& options;
  SlpGraph& graph;

  Var base(const std::string& name) {
    const auto& e = state.layout.at(name);
    Var v = graph.tape.view(state.base.data() + e.offset, e.rows, e.cols, options.scope == GradScope::kBase);
    if (options.scope == GradScope::kBase) graph.params.emplace_back(name, v);
    return v;
  }

  Var adapter_param(const std::string& name) {
    const Adapter& ad = *state.adapter;
    const auto& e = ad.layout.at(name);
    Var v = graph.tape.view(ad.params.data() + e.offset, e.rows, e.cols, options.scope == GradScope::kAdapter);
    if (options.scope == GradScope::kAdapter) graph.params.emplace_back(name, v);
    return v;
  }

  Var project(Var x, int layer, const char* proj) {
    const std::string name = "l" + std::to_string(layer) + "." + proj;
    Var y = graph.tape.matmul(x, base(name));
    if (state.adapter && options.use_adapter) {
      Var a = adapter_param(name + ".lora_a");
      Var b = adapter_param(name + ".lora_b");
      Var delta = graph.tape.matmul(graph.tape.matmul(x, a), b);
      y = graph.tape.add(y, graph.tape.scale(delta, state.adapter->scale()));
    }
    return y;
  }
};

void check_fits(const ToyModelState& state, std::size_t prompt, std::size_t continuation) {
  if (prompt + continuation > static_cast<std::size_t>(state.config.context)) {
    fail(ErrorKind::kContextOverflow, "sequence of " + std::to_string(prompt + continuation) +
                                          " tokens exceeds context " + std::to_string(state.config.context));
  }
  if (prompt == 0 && continuation > 0) {
    fail(ErrorKind::kInvalidArgument, "prompt must contain at least one token");
  }
}

}  // namespace

SlpGraph build_slp_graph(const ToyModelState& state, std::span<const SequenceSpec> batch,
                         const GraphOptions& options) {
  if (options.scope == GradScope::kAdapter && !state.adapter) {
    fail(ErrorKind::kInvalidArgument, "adapter gradient requested but no adapter is attached");
  }
  const ToyConfig& cfg = state.config;
  SlpGraph graph;
  Builder b{state, options, graph};
  Tape& t = graph.tape;

  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> predicting_rows;
  std::vector<int> targets;
  std::vector<int> group;
  int row = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& spec = batch[s];
    check_fits(state, spec.prompt.size(), spec.continuation.size());
    const int len = static_cast<int>(spec.prompt.size() + spec.continuation.size());
    graph.segments.push_back({row, len});
    int pos = 0;
    for (const auto* part : {&spec.prompt, &spec.continuation}) {
      for (TokenId tok : *part) {
        if (tok < 0 || tok >= cfg.vocab) fail(ErrorKind::kInvalidArgument, "token id outside vocabulary");
        ids.push_back(tok);
        positions.push_back(pos++);
      }
    }
    const int p = static_cast<int>(spec.prompt.size());
    for (std::size_t j = 0; j < spec.continuation.size(); ++j) {
      predicting_rows.push_back(row + p - 1 + static_cast<int>(j));
      targets.push_back(spec.continuation[j]);
      group.push_back(static_cast<int>(s));
    }
    row += len;
  }
  const int total_rows = row;

  Var tok_emb = b.base("tok_emb");
  Var x;
  if (options.input_embeddings || options.embedding_grad) {
    std::vector<double> rows;
    if (options.input_embeddings) {
      if (options.input_embeddings->size() != static_cast<std::size_t>(total_rows) * cfg.width) {
        fail(ErrorKind::kInvalidArgument, "input_embeddings has the wrong size");
      }
      rows = *options.input_embeddings;
    } else {
      rows = token_embeddings(state, ids);
    }
    x = t.leaf(std::move(rows), total_rows, cfg.width, options.embedding_grad);
  } else {
    x = t.gather_rows(tok_emb, ids);
  }
  graph.input_embeddings = x;
  Var h = t.add(x, t.gather_rows(b.base("pos_emb"), positions));

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "l" + std::to_string(l) + ".";
    Var a = t.rmsnorm(h, b.base(prefix + "attn_norm"), cfg.rms_eps);
    Var q = b.project(a, l, "q");
    Var k = b.project(a, l, "k");
    Var v = b.project(a, l, "v");
    Var att = t.causal_attention(q, k, v, cfg.heads, graph.segments, options.blocked_keys);
    h = t.add(h, b.project(att, l, "o"));
    Var m = t.rmsnorm(h, b.base(prefix + "mlp_norm"), cfg.rms_eps);
    Var gated = t.mul(t.silu(b.project(m, l, "gate")), b.project(m, l, "up"));
    h = t.add(h, b.project(gated, l, "down"));
  }
  Var hf = t.rmsnorm(h, b.base("final_norm"), cfg.rms_eps);
  Var selected = t.gather_rows(hf, predicting_rows);
  graph.logits = t.matmul(selected, b.base("out"));
  graph.token_logprobs = t.pick_logprob(graph.logits, targets);
  graph.slps = t.segment_sum(graph.token_logprobs, group, static_cast<int>(batch.size()));
  return graph;
}

LogProbResult forward_slp(const ToyModelState& state, std::span<const TokenId> prompt,
                          std::span<const TokenId> continuation, bool use_adapter) {
  SequenceSpec spec{{prompt.begin(), prompt.end()}, {continuation.begin(), continuation.end()}};
  GraphOptions options;
  options.use_adapter = use_adapter;
  SlpGraph g = build_slp_graph(state, std::span(&spec, 1), options);
  LogProbResult out;
  auto lp = g.tape.value(g.token_logprobs);
  out.per_token_logprob.assign(lp.begin(), lp.end());
  for (double v : out.per_token_logprob) out.slp += v;
  return out;
}

std::vector<double> next_token_logprobs(const ToyModelState& state, std::span<const TokenId> tokens) {
  if (tokens.empty()) fail(ErrorKind::kInvalidArgument, "next_token_logprobs: empty prefix");
  // A dummy one-token continuation exposes the logits row after the prefix.
  SequenceSpec spec{{tokens.begin(), tokens.end()}, {0}};
  check_fits(state, tokens.size(), 1);
  GraphOptions options;
  SlpGraph g = build_slp_graph(state, std::span(&spec, 1), options);
  auto row = g.tape.value(g.logits);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double logz = mx + std::log(z);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - logz;
  return out;
}

std::vector<double> token_embeddings(const ToyModelState& state, std::span<const TokenId> ids) {
  const int w = state.config.width;
  auto table = state.param("tok_emb");
  std::vector<double> out(ids.size() * static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= state.config.vocab) fail(ErrorKind::kInvalidArgument, "token id outside vocabulary");
    std::copy_n(table.data() + static_cast<std::size_t>(ids[i]) * w, w, out.data() + i * w);
  }
  return out;
}

std::vector<EmbeddingGradient> grad_slp_wrt_embeddings_batch(
    const ToyModelState& state, std::span<const TokenId> prompt, std::span<const TokenId> continuation,
    std::span<const std::vector<double>> prompt_embeddings) {
  const int w = state.config.width;
  const std::size_t m = prompt.size();
  const std::size_t len = prompt.size() + continuation.size();
  std::vector<SequenceSpec> batch(prompt_embeddings.size(),
                                  SequenceSpec{{prompt.begin(), prompt.end()}, {continuation.begin(), continuation.end()}});
  std::vector<TokenId> all(prompt.begin(), prompt.end());
  all.insert(all.end(), continuation.begin(), continuation.end());
  const std::vector<double> natural = token_embeddings(state, all);
  std::vector<double> inputs;
  inputs.reserve(batch.size() * natural.size());
  for (const auto& pe : prompt_embeddings) {
    if (!pe.empty() && pe.size() != m * static_cast<std::size_t>(w)) {
      fail(ErrorKind::kInvalidArgument, "prompt embedding replacement has the wrong size");
    }
    const auto& head = pe.empty() ? natural : pe;
    inputs.insert(inputs.end(), head.begin(), head.begin() + static_cast<std::ptrdiff_t>(m * w));
    inputs.insert(inputs.end(), natural.begin() + static_cast<std::ptrdiff_t>(m * w), natural.end());
  }
  GraphOptions options;
  options.embedding_grad = true;
  options.input_embeddings = &inputs;
  SlpGraph g = build_slp_graph(state, batch, options);
  std::vector<double> seed(batch.size(), 1.0);
  g.tape.backward(g.slps, seed);
  auto slps = g.tape.value(g.slps);
  auto grad = g.tape.grad(g.input_embeddings);
  std::vector<EmbeddingGradient> out(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    out[s].slp = slps[s];
    out[s].grad.assign(m * w, 0.0);
    if (!grad.empty()) {
      std::copy_n(grad.data() + s * len * w, m * w, out[s].grad.data());
    }
  }
  return out;
}

EmbeddingGradient grad_slp_wrt_embeddings(const ToyModelState& state, std::span<const TokenId> prompt,
                                          std::span<const TokenId> continuation,
                                          const std::vector<double>& prompt_embeddings,
                                          const std::vector<bool>& blocked_keys) {
  if (blocked_keys.empty()) {
    return std::move(grad_slp_wrt_embeddings_batch(state, prompt, continuation,
                                                   std::span(&prompt_embeddings, 1))[0]);
  }
  const int w = state.config.width;
  SequenceSpec spec{{prompt.begin(), prompt.end()}, {continuation.begin(), continuation.end()}};
  std::vector<TokenId> all(prompt.begin(), prompt.end());
  all.insert(all.end(), continuation.begin(), continuation.end());
  std::vector<double> inputs = token_embeddings(state, all);
  if (!prompt_embeddings.empty()) std::copy(prompt_embeddings.begin(), prompt_embeddings.end(), inputs.begin());
  GraphOptions options;
  options.embedding_grad = true;
  options.input_embeddings = &inputs;
  options.blocked_keys = blocked_keys;
  SlpGraph g = build_slp_graph(state, std::span(&spec, 1), options);
  const double one = 1.0;
  g.tape.backward(g.slps, std::span(&one, 1));
  EmbeddingGradient out;
  out.slp = g.tape.value(g.slps)[0];
  out.grad.assign(prompt.size() * static_cast<std::size_t>(w), 0.0);
  auto grad = g.tape.grad(g.input_embeddings);
  if (!grad.empty()) std::copy_n(grad.data(), out.grad.size(), out.grad.data());
  return out;
}

std::vector<double> collect_param_grad(const SlpGraph& graph, const ToyModelState& state, GradScope scope) {
  const ParamLayout& layout = scope == GradScope::kAdapter ? state.adapter->layout : state.layout;
  std::vector<double> out(layout.total(), 0.0);
  for (const auto& [name, var] : graph.params) {
    auto g = graph.tape.grad(var);
    if (g.empty()) continue;
    const auto& e = layout.at(name);
    for (std::size_t i = 0; i < e.size(); ++i) out[e.offset + i] += g[i];
  }
  return out;
}

std::vector<double> grad_slp_wrt_params(const ToyModelState& state, std::span<const TokenId> prompt,
                                        std::span<const TokenId> continuation, GradScope scope) {
  if (scope == GradScope::kNone) fail(ErrorKind::kInvalidArgument, "grad_slp_wrt_params needs a scope");
  SequenceSpec spec{{prompt.begin(), prompt.end()}, {continuation.begin(), continuation.end()}};
  GraphOptions options;
  options.scope = scope;
  SlpGraph g = build_slp_graph(state, std::span(&spec, 1), options);
  const double one = 1.0;
  g.tape.backward(g.slps, std::span(&one, 1));
  return collect_param_grad(g, state, scope);
}

}  // namespace selfcon::toylm
