#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace selfcon::toylm {

/// Reverse-mode autodiff over dense row-major matrices.
///
/// Nodes are appended in evaluation order, so index order is a topological
/// order and backward() simply walks the node list in reverse. Gradients
/// accumulate additively into each node's grad buffer; nodes that do not
/// depend on any grad-requiring leaf carry no backward closure at all.
class Tape {
 public:
  struct Var {
    std::uint32_t index = 0;
  };

  struct Segment {
    int begin = 0;
    int length = 0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf viewing external storage; the storage must outlive the tape.
  Var view(const double* data, int rows, int cols, bool requires_grad);
  /// Leaf owning its data.
  Var leaf(std::vector<double> data, int rows, int cols, bool requires_grad);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var silu(Var a);
  /// Row-wise x / rms(x) * gain, gain is [1 x cols].
  Var rmsnorm(Var x, Var gain, double eps);
  Var gather_rows(Var table, std::span<const int> rows);
  /// Causal multi-head attention inside each segment of rows. Keys listed in
  /// blocked (per global row, may be empty) are never attended to, except by
  /// their own query.
  Var causal_attention(Var q, Var k, Var v, int heads, std::span<const Segment> segments,
                       const std::vector<bool>& blocked = {});
  /// [rows x 1] column of log_softmax(logits[r])[targets[r]].
  Var pick_logprob(Var logits, std::span<const int> targets);
  /// [groups x 1] sums of a column vector over row groups.
  Var segment_sum(Var column, std::span<const int> group_of_row, int groups);

  int rows(Var v) const { return nodes_[v.index].rows; }
  int cols(Var v) const { return nodes_[v.index].cols; }
  std::span<const double> value(Var v) const;
  /// Empty when the node never received a gradient.
  std::span<const double> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

  /// Seeds d(out) with `seed` (same size as out) and sweeps in reverse.
  void backward(Var out, std::span<const double> seed);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> owned;
    const double* external = nullptr;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::uint32_t)> backward;

    const double* data() const { return external ? external : owned.data(); }
    std::size_t numel() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  };

  Var push(Node node);
  Node& node(Var v) { return nodes_[v.index]; }
  const Node& node(Var v) const { return nodes_[v.index]; }
  std::vector<double>& grad_buffer(std::uint32_t index);

  std::vector<Node> nodes_;
};

namespace kernels {
// c[r x n] += a[r x k] * b[k x n]
void gemm_nn_acc(const double* a, const double* b, double* c, int r, int k, int n);
// c[k x n] += a[r x k]^T * b[r x n]
void gemm_tn_acc(const double* a, const double* b, double* c, int r, int k, int n);
// c[r x k] += a[r x n] * b[k x n]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int r, int n, int k);
}  // namespace kernels

}  // namespace selfcon::toylm
