#pragma once

// Plain-loop forward pass of the toy transformer, written without the tape so
// it can serve as an independent check of the production graph.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "selfcon/toylm/model.hpp"

namespace reftest {

using selfcon::TokenId;
using selfcon::toylm::ToyModelState;

using Mat = std::vector<std::vector<double>>;

inline Mat weight(const ToyModelState& s, const std::string& name) {
  const auto& e = s.layout.at(name);
  const auto data = s.param(name);
  Mat w(e.rows, std::vector<double>(e.cols));
  for (int r = 0; r < e.rows; ++r)
    for (int c = 0; c < e.cols; ++c) w[r][c] = data[r * e.cols + c];
  if (s.adapter && s.adapter->layout.entries().size() > 0) {
    const auto& al = s.adapter->layout;
    bool adapted = false;
    for (const auto& a : al.entries()) adapted = adapted || a.name == name + ".lora_a";
    if (adapted) {
      const auto& ea = al.at(name + ".lora_a");
      const auto& eb = al.at(name + ".lora_b");
      const double* A = s.adapter->params.data() + ea.offset;
      const double* B = s.adapter->params.data() + eb.offset;
      for (int r = 0; r < e.rows; ++r)
        for (int c = 0; c < e.cols; ++c) {
          double d = 0.0;
          for (int k = 0; k < ea.cols; ++k) d += A[r * ea.cols + k] * B[k * eb.cols + c];
          w[r][c] += s.adapter->scale() * d;
        }
    }
  }
  return w;
}

inline std::vector<double> matvec(const std::vector<double>& x, const Mat& w) {
  std::vector<double> y(w[0].size(), 0.0);
  for (std::size_t r = 0; r < w.size(); ++r)
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += x[r] * w[r][c];
  return y;
}

inline std::vector<double> rmsnorm(const std::vector<double>& x, const Mat& g, double eps) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * g[0][i];
  return y;
}

/// Log-softmax rows for every position of `ids`.
inline Mat forward_logprobs(const ToyModelState& s, std::span<const TokenId> ids) {
  const auto& cfg = s.config;
  const int n = static_cast<int>(ids.size());
  const int dh = cfg.width / cfg.heads;
  const Mat tok = weight(s, "tok_emb");
  const Mat pos = weight(s, "pos_emb");
  Mat h(n, std::vector<double>(cfg.width));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cfg.width; ++c) h[i][c] = tok[ids[i]][c] + pos[i][c];

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    const Mat an = weight(s, p + "attn_norm"), wq = weight(s, p + "q"), wk = weight(s, p + "k"),
              wv = weight(s, p + "v"), wo = weight(s, p + "o"), mn = weight(s, p + "mlp_norm"),
              wg = weight(s, p + "gate"), wu = weight(s, p + "up"), wd = weight(s, p + "down");
    Mat q(n), k(n), v(n);
    for (int i = 0; i < n; ++i) {
      const auto a = rmsnorm(h[i], an, cfg.rms_eps);
      q[i] = matvec(a, wq);
      k[i] = matvec(a, wk);
      v[i] = matvec(a, wv);
    }
    Mat att(n, std::vector<double>(cfg.width, 0.0));
    for (int hd = 0; hd < cfg.heads; ++hd) {
      for (int i = 0; i < n; ++i) {
        std::vector<double> sc(i + 1);
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          double d = 0.0;
          for (int e = 0; e < dh; ++e) d += q[i][hd * dh + e] * k[j][hd * dh + e];
          sc[j] = d / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, sc[j]);
        }
        double z = 0.0;
        for (double& x : sc) z += (x = std::exp(x - mx));
        for (int j = 0; j <= i; ++j)
          for (int e = 0; e < dh; ++e) att[i][hd * dh + e] += sc[j] / z * v[j][hd * dh + e];
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto o = matvec(att[i], wo);
      for (int c = 0; c < cfg.width; ++c) h[i][c] += o[c];
      const auto m = rmsnorm(h[i], mn, cfg.rms_eps);
      auto g = matvec(m, wg);
      const auto u = matvec(m, wu);
      for (std::size_t c = 0; c < g.size(); ++c) g[c] = g[c] / (1.0 + std::exp(-g[c])) * u[c];
      const auto d = matvec(g, wd);
      for (int c = 0; c < cfg.width; ++c) h[i][c] += d[c];
    }
  }
  const Mat fn = weight(s, "final_norm");
  const Mat out = weight(s, "out");
  Mat lp(n);
  for (int i = 0; i < n; ++i) {
    auto logits = matvec(rmsnorm(h[i], fn, cfg.rms_eps), out);
    double mx = -1e300;
    for (double x : logits) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : logits) z += std::exp(x - mx);
    for (double& x : logits) x = x - mx - std::log(z);
    lp[i] = std::move(logits);
  }
  return lp;
}

inline double reference_slp(const ToyModelState& s, std::span<const TokenId> prompt,
                            std::span<const TokenId> continuation) {
  std::vector<TokenId> all(prompt.begin(), prompt.end());
  all.insert(all.end(), continuation.begin(), continuation.end());
  const Mat lp = forward_logprobs(s, all);
  double slp = 0.0;
  for (std::size_t j = 0; j < continuation.size(); ++j) slp += lp[prompt.size() - 1 + j][continuation[j]];
  return slp;
}

}  // namespace reftest
