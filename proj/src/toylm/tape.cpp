#include "selfcon/toylm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selfcon/core/error.hpp"

namespace selfcon::toylm {

namespace kernels {

// Every kernel adds into c one product term at a time, in increasing p, so
// the summation order is fixed regardless of vector width.
void gemm_nn_acc(const double* a, const double* b, double* c, int r, int k, int n) {
  int i = 0;
  for (; i + 4 <= r; i += 4) {
    double* __restrict c0 = c + static_cast<std::ptrdiff_t>(i) * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    const double* a0 = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
      const double* __restrict bp = b + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = bp[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < r; ++i) {
    double* __restrict ci = c + static_cast<std::ptrdiff_t>(i) * n;
    const double* ai = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double x = ai[p];
      const double* __restrict bp = b + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += x * bp[j];
    }
  }
}

namespace {

std::vector<double> transposed(const double* m, int rows, int cols) {
  std::vector<double> t(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) t[static_cast<std::size_t>(j) * rows + i] = m[static_cast<std::size_t>(i) * cols + j];
  }
  return t;
}

}  // namespace

void gemm_tn_acc(const double* a, const double* b, double* c, int r, int k, int n) {
  const auto at = transposed(a, r, k);
  gemm_nn_acc(at.data(), b, c, k, r, n);
}

void gemm_nt_acc(const double* a, const double* b, double* c, int r, int n, int k) {
  const auto bt = transposed(b, k, n);
  gemm_nn_acc(a, bt.data(), c, r, n, k);
}

}  // namespace kernels

namespace {

void check(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::kInvalidArgument, std::string("Tape: ") + what);
}

}  // namespace

Tape::Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buffer(std::uint32_t index) {
  Node& n = nodes_[index];
  if (n.grad.empty()) n.grad.assign(n.numel(), 0.0);
  return n.grad;
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {n.data(), n.numel()};
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  return {n.grad.data(), n.grad.size()};
}

Tape::Var Tape::view(const double* data, int rows, int cols, bool requires_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.external = data;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::leaf(std::vector<double> data, int rows, int cols, bool requires_grad) {
  check(data.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), "leaf size mismatch");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.owned = std::move(data);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  check(na.cols == nb.rows, "matmul shape mismatch");
  Node out;
  out.rows = na.rows;
  out.cols = nb.cols;
  out.owned.assign(out.numel(), 0.0);
  kernels::gemm_nn_acc(na.data(), nb.data(), out.owned.data(), na.rows, na.cols, nb.cols);
  out.requires_grad = na.requires_grad || nb.requires_grad;
  if (out.requires_grad) {
    out.backward = [a, b](Tape& t, std::uint32_t self) {
      const Node& no = t.nodes_[self];
      const Node& na = t.nodes_[a.index];
      const Node& nb = t.nodes_[b.index];
      if (na.requires_grad) {
        auto& ga = t.grad_buffer(a.index);
        kernels::gemm_nt_acc(no.grad.data(), t.nodes_[b.index].data(), ga.data(), no.rows, no.cols, na.cols);
      }
      if (nb.requires_grad) {
        auto& gb = t.grad_buffer(b.index);
        kernels::gemm_tn_acc(t.nodes_[a.index].data(), no.grad.data(), gb.data(), no.rows, na.cols, no.cols);
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::add(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  check(na.rows == nb.rows && na.cols == nb.cols, "add shape mismatch");
  Node out;
  out.rows = na.rows;
  out.cols = na.cols;
  out.owned.resize(out.numel());
  const double* pa = na.data();
  const double* pb = nb.data();
  for (std::size_t i = 0; i < out.owned.size(); ++i) out.owned[i] = pa[i] + pb[i];
  out.requires_grad = na.requires_grad || nb.requires_grad;
  if (out.requires_grad) {
    out.backward = [a, b](Tape& t, std::uint32_t self) {
      for (Var in : {a, b}) {
        if (!t.nodes_[in.index].requires_grad) continue;
        auto& g = t.grad_buffer(in.index);
        const auto& go = t.nodes_[self].grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::mul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  check(na.rows == nb.rows && na.cols == nb.cols, "mul shape mismatch");
  Node out;
  out.rows = na.rows;
  out.cols = na.cols;
  out.owned.resize(out.numel());
  const double* pa = na.data();
  const double* pb = nb.data();
  for (std::size_t i = 0; i < out.owned.size(); ++i) out.owned[i] = pa[i] * pb[i];
  out.requires_grad = na.requires_grad || nb.requires_grad;
  if (out.requires_grad) {
    out.backward = [a, b](Tape& t, std::uint32_t self) {
      const auto& go = t.nodes_[self].grad;
      if (t.nodes_[a.index].requires_grad) {
        auto& g = t.grad_buffer(a.index);
        const double* pb = t.nodes_[b.index].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * pb[i];
      }
      if (t.nodes_[b.index].requires_grad) {
        auto& g = t.grad_buffer(b.index);
        const double* pa = t.nodes_[a.index].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * pa[i];
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::scale(Var a, double s) {
  const Node& na = node(a);
  Node out;
  out.rows = na.rows;
  out.cols = na.cols;
  out.owned.resize(out.numel());
  const double* pa = na.data();
  for (std::size_t i = 0; i < out.owned.size(); ++i) out.owned[i] = pa[i] * s;
  out.requires_grad = na.requires_grad;
  if (out.requires_grad) {
    out.backward = [a, s](Tape& t, std::uint32_t self) {
      auto& g = t.grad_buffer(a.index);
      const auto& go = t.nodes_[self].grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * s;
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::silu(Var a) {
  const Node& na = node(a);
  Node out;
  out.rows = na.rows;
  out.cols = na.cols;
  out.owned.resize(out.numel());
  const double* pa = na.data();
  for (std::size_t i = 0; i < out.owned.size(); ++i) out.owned[i] = pa[i] / (1.0 + std::exp(-pa[i]));
  out.requires_grad = na.requires_grad;
  if (out.requires_grad) {
    out.backward = [a](Tape& t, std::uint32_t self) {
      auto& g = t.grad_buffer(a.index);
      const auto& go = t.nodes_[self].grad;
      const double* pa = t.nodes_[a.index].data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-pa[i]));
        g[i] += go[i] * sig * (1.0 + pa[i] * (1.0 - sig));
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::rmsnorm(Var x, Var gain, double eps) {
  const Node& nx = node(x);
  const Node& ng = node(gain);
  check(ng.rows == 1 && ng.cols == nx.cols, "rmsnorm gain shape");
  const int r = nx.rows;
  const int c = nx.cols;
  Node out;
  out.rows = r;
  out.cols = c;
  out.owned.resize(out.numel());
  std::vector<double> inv_rms(static_cast<std::size_t>(r));
  const double* px = nx.data();
  const double* pg = ng.data();
  for (int i = 0; i < r; ++i) {
    const double* xi = px + static_cast<std::ptrdiff_t>(i) * c;
    double ss = 0.0;
    for (int j = 0; j < c; ++j) ss += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ss / c + eps);
    inv_rms[static_cast<std::size_t>(i)] = inv;
    double* yi = out.owned.data() + static_cast<std::ptrdiff_t>(i) * c;
    for (int j = 0; j < c; ++j) yi[j] = xi[j] * inv * pg[j];
  }
  out.requires_grad = nx.requires_grad || ng.requires_grad;
  if (out.requires_grad) {
    out.backward = [x, gain, inv_rms = std::move(inv_rms)](Tape& t, std::uint32_t self) {
      const Node& no = t.nodes_[self];
      const int r = no.rows;
      const int c = no.cols;
      const double* px = t.nodes_[x.index].data();
      const double* pg = t.nodes_[gain.index].data();
      const bool gx = t.nodes_[x.index].requires_grad;
      const bool gg = t.nodes_[gain.index].requires_grad;
      double* dx = gx ? t.grad_buffer(x.index).data() : nullptr;
      double* dg = gg ? t.grad_buffer(gain.index).data() : nullptr;
      for (int i = 0; i < r; ++i) {
        const double inv = inv_rms[static_cast<std::size_t>(i)];
        const double* xi = px + static_cast<std::ptrdiff_t>(i) * c;
        const double* gy = no.grad.data() + static_cast<std::ptrdiff_t>(i) * c;
        if (dg) {
          for (int j = 0; j < c; ++j) dg[j] += gy[j] * xi[j] * inv;
        }
        if (dx) {
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += gy[j] * pg[j] * xi[j];
          const double coef = dot * inv * inv / c;
          double* dxi = dx + static_cast<std::ptrdiff_t>(i) * c;
          for (int j = 0; j < c; ++j) dxi[j] += inv * (gy[j] * pg[j] - xi[j] * coef);
        }
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::gather_rows(Var table, std::span<const int> rows) {
  const Node& nt = node(table);
  const int c = nt.cols;
  Node out;
  out.rows = static_cast<int>(rows.size());
  out.cols = c;
  out.owned.resize(out.numel());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < nt.rows, "gather_rows index out of range");
    std::copy_n(nt.data() + static_cast<std::ptrdiff_t>(rows[i]) * c, c,
                out.owned.data() + static_cast<std::ptrdiff_t>(i) * c);
  }
  out.requires_grad = nt.requires_grad;
  if (out.requires_grad) {
    out.backward = [table, idx = std::vector<int>(rows.begin(), rows.end())](Tape& t, std::uint32_t self) {
      const Node& no = t.nodes_[self];
      auto& g = t.grad_buffer(table.index);
      const int c = no.cols;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = no.grad.data() + static_cast<std::ptrdiff_t>(i) * c;
        double* dst = g.data() + static_cast<std::ptrdiff_t>(idx[i]) * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::causal_attention(Var q, Var k, Var v, int heads, std::span<const Segment> segments,
                                 const std::vector<bool>& blocked) {
  const Node& nq = node(q);
  const Node& nk = node(k);
  const Node& nv = node(v);
  check(nq.rows == nk.rows && nq.rows == nv.rows && nq.cols == nk.cols && nq.cols == nv.cols,
        "attention shape mismatch");
  check(heads > 0 && nq.cols % heads == 0, "attention head count");
  check(blocked.empty() || blocked.size() == static_cast<std::size_t>(nq.rows), "attention blocked mask size");
  const int d = nq.cols;
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs layout: per segment, per head, lower-triangular L x L block stored dense.
  std::vector<std::size_t> prob_offset(segments.size());
  std::size_t total = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    prob_offset[s] = total;
    total += static_cast<std::size_t>(heads) * segments[s].length * segments[s].length;
  }
  std::vector<double> probs(total, 0.0);

  Node out;
  out.rows = nq.rows;
  out.cols = d;
  out.owned.assign(out.numel(), 0.0);
  const double* pq = nq.data();
  const double* pk = nk.data();
  const double* pv = nv.data();
  std::vector<double> row;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const int b = segments[s].begin;
    const int len = segments[s].length;
    check(b >= 0 && b + len <= nq.rows, "attention segment out of range");
    for (int h = 0; h < heads; ++h) {
      double* P = probs.data() + prob_offset[s] + static_cast<std::size_t>(h) * len * len;
      for (int i = 0; i < len; ++i) {
        const double* qi = pq + static_cast<std::ptrdiff_t>(b + i) * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        row.assign(static_cast<std::size_t>(i + 1), 0.0);
        for (int j = 0; j <= i; ++j) {
          if (j != i && !blocked.empty() && blocked[static_cast<std::size_t>(b + j)]) {
            row[static_cast<std::size_t>(j)] = -std::numeric_limits<double>::infinity();
            continue;
          }
          const double* kj = pk + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
          double dot = 0.0;
          for (int e = 0; e < dh; ++e) dot += qi[e] * kj[e];
          row[static_cast<std::size_t>(j)] = dot * inv_sqrt;
          mx = std::max(mx, row[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double e = std::isinf(row[static_cast<std::size_t>(j)]) ? 0.0 : std::exp(row[static_cast<std::size_t>(j)] - mx);
          P[i * len + j] = e;
          z += e;
        }
        double* oi = out.owned.data() + static_cast<std::ptrdiff_t>(b + i) * d + h * dh;
        for (int j = 0; j <= i; ++j) {
          const double p = P[i * len + j] / z;
          P[i * len + j] = p;
          if (p == 0.0) continue;
          const double* vj = pv + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
          for (int e = 0; e < dh; ++e) oi[e] += p * vj[e];
        }
      }
    }
  }

  out.requires_grad = nq.requires_grad || nk.requires_grad || nv.requires_grad;
  if (out.requires_grad) {
    out.backward = [q, k, v, heads, inv_sqrt, dh,
                    segs = std::vector<Segment>(segments.begin(), segments.end()),
                    prob_offset = std::move(prob_offset), probs = std::move(probs)](Tape& t, std::uint32_t self) {
      const Node& no = t.nodes_[self];
      const int d = no.cols;
      const double* pq = t.nodes_[q.index].data();
      const double* pk = t.nodes_[k.index].data();
      const double* pv = t.nodes_[v.index].data();
      const bool gq_on = t.nodes_[q.index].requires_grad;
      const bool gk_on = t.nodes_[k.index].requires_grad;
      const bool gv_on = t.nodes_[v.index].requires_grad;
      double* gq = gq_on ? t.grad_buffer(q.index).data() : nullptr;
      double* gk = gk_on ? t.grad_buffer(k.index).data() : nullptr;
      double* gv = gv_on ? t.grad_buffer(v.index).data() : nullptr;
      const double* go = no.grad.data();
      std::vector<double> dp;
      for (std::size_t s = 0; s < segs.size(); ++s) {
        const int b = segs[s].begin;
        const int len = segs[s].length;
        for (int h = 0; h < heads; ++h) {
          const double* P = probs.data() + prob_offset[s] + static_cast<std::size_t>(h) * len * len;
          for (int i = 0; i < len; ++i) {
            const double* goi = go + static_cast<std::ptrdiff_t>(b + i) * d + h * dh;
            dp.assign(static_cast<std::size_t>(i + 1), 0.0);
            double weighted = 0.0;
            for (int j = 0; j <= i; ++j) {
              const double p = P[i * len + j];
              if (p == 0.0) continue;
              const double* vj = pv + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
              double dot = 0.0;
              for (int e = 0; e < dh; ++e) dot += goi[e] * vj[e];
              dp[static_cast<std::size_t>(j)] = dot;
              weighted += p * dot;
              if (gv) {
                double* gvj = gv + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
                for (int e = 0; e < dh; ++e) gvj[e] += p * goi[e];
              }
            }
            if (!gq && !gk) continue;
            const double* qi = pq + static_cast<std::ptrdiff_t>(b + i) * d + h * dh;
            double* gqi = gq ? gq + static_cast<std::ptrdiff_t>(b + i) * d + h * dh : nullptr;
            for (int j = 0; j <= i; ++j) {
              const double p = P[i * len + j];
              if (p == 0.0) continue;
              const double ds = p * (dp[static_cast<std::size_t>(j)] - weighted) * inv_sqrt;
              const double* kj = pk + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
              if (gqi) {
                for (int e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
              }
              if (gk) {
                double* gkj = gk + static_cast<std::ptrdiff_t>(b + j) * d + h * dh;
                for (int e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
              }
            }
          }
        }
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::pick_logprob(Var logits, std::span<const int> targets) {
  const Node& nl = node(logits);
  check(static_cast<std::size_t>(nl.rows) == targets.size(), "pick_logprob target count");
  const int r = nl.rows;
  const int c = nl.cols;
  std::vector<double> probs(static_cast<std::size_t>(r) * c);
  Node out;
  out.rows = r;
  out.cols = 1;
  out.owned.resize(static_cast<std::size_t>(r));
  const double* pl = nl.data();
  for (int i = 0; i < r; ++i) {
    check(targets[static_cast<std::size_t>(i)] >= 0 && targets[static_cast<std::size_t>(i)] < c, "pick_logprob target id");
    const double* li = pl + static_cast<std::ptrdiff_t>(i) * c;
    const double mx = *std::max_element(li, li + c);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(li[j] - mx);
    const double logz = mx + std::log(z);
    double* pi = probs.data() + static_cast<std::ptrdiff_t>(i) * c;
    for (int j = 0; j < c; ++j) pi[j] = std::exp(li[j] - logz);
    out.owned[static_cast<std::size_t>(i)] = li[targets[static_cast<std::size_t>(i)]] - logz;
  }
  out.requires_grad = nl.requires_grad;
  if (out.requires_grad) {
    out.backward = [logits, probs = std::move(probs),
                    tg = std::vector<int>(targets.begin(), targets.end())](Tape& t, std::uint32_t self) {
      const Node& no = t.nodes_[self];
      auto& g = t.grad_buffer(logits.index);
      const int c = t.nodes_[logits.index].cols;
      for (int i = 0; i < no.rows; ++i) {
        const double go = no.grad[static_cast<std::size_t>(i)];
        if (go == 0.0) continue;
        double* gi = g.data() + static_cast<std::ptrdiff_t>(i) * c;
        const double* pi = probs.data() + static_cast<std::ptrdiff_t>(i) * c;
        for (int j = 0; j < c; ++j) gi[j] -= go * pi[j];
        gi[tg[static_cast<std::size_t>(i)]] += go;
      }
    };
  }
  return push(std::move(out));
}

Tape::Var Tape::segment_sum(Var column, std::span<const int> group_of_row, int groups) {
  const Node& nc = node(column);
  check(nc.cols == 1 && static_cast<std::size_t>(nc.rows) == group_of_row.size(), "segment_sum shape");
  Node out;
  out.rows = groups;
  out.cols = 1;
  out.owned.assign(static_cast<std::size_t>(groups), 0.0);
  const double* pc = nc.data();
  for (std::size_t i = 0; i < group_of_row.size(); ++i) {
    check(group_of_row[i] >= 0 && group_of_row[i] < groups, "segment_sum group id");
    out.owned[static_cast<std::size_t>(group_of_row[i])] += pc[i];
  }
  out.requires_grad = nc.requires_grad;
  if (out.requires_grad) {
    out.backward = [column, grp = std::vector<int>(group_of_row.begin(), group_of_row.end())](Tape& t,
                                                                                           std::uint32_t self) {
      auto& g = t.grad_buffer(column.index);
      const auto& go = t.nodes_[self].grad;
      for (std::size_t i = 0; i < grp.size(); ++i) g[i] += go[static_cast<std::size_t>(grp[i])];
    };
  }
  return push(std::move(out));
}

void Tape::backward(Var out, std::span<const double> seed) {
  Node& no = node(out);
  check(seed.size() == no.numel(), "backward seed size");
  if (!no.requires_grad) return;
  auto& g = grad_buffer(out.index);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (std::uint32_t i = out.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

}  // namespace selfcon::toylm
