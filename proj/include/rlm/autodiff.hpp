#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rlm/tensor.hpp"

namespace rlm {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape. Nodes are appended in evaluation order and backward()
/// walks them in reverse, so gradient accumulation order is fixed by the
/// forward program alone.
///
/// A graph built with record == false evaluates values only; no backward
/// closures or gradient buffers are kept.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::span<const double>)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Leaf that aliases `value` (which must outlive the graph). Gradients are
  /// accumulated straight into `sink` when it is non-null.
  Var parameter(const Tensor& value, std::vector<double>* sink);
  Var make(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var make(Tensor value, std::span<const Var> inputs, Backward fn);

  const Tensor& value(Var v) const;
  double scalar(Var v) const { return value(v)[0]; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient accumulator of v; empty when v does not need a gradient.
  std::span<double> grad(Var v);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs the tape backwards.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    std::vector<double> grad_store;
    std::vector<double>* sink = nullptr;
    bool needs_grad = false;
    bool touched = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool record_;
};

namespace ad {

Var matmul(Graph& g, Var a, Var b);
/// x[m x in] * w[in x out] + b[1 x out]
Var linear(Graph& g, Var x, Var w, Var b);
Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double c);
Var gelu(Graph& g, Var x);
/// Row-wise layer normalization with [1 x d] gamma and beta.
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps);
/// Unmasked multi-head scaled dot-product attention over [L x d] inputs;
/// head h uses columns [h*d/heads, (h+1)*d/heads).
Var attention(Graph& g, Var q, Var k, Var v, std::size_t heads);
Var gather_rows(Graph& g, Var table, std::span<const std::size_t> ids);
Var slice_rows(Graph& g, Var x, std::size_t begin, std::size_t count);
Var row(Graph& g, Var x, std::size_t r);
/// [1 x d] row repeated n times.
Var broadcast_rows(Graph& g, Var r, std::size_t n);
Var concat_cols(Graph& g, Var a, Var b);
/// Row-wise log-softmax.
Var log_softmax(Graph& g, Var x);
/// Element (r, c) as a 1x1 node.
Var pick(Graph& g, Var x, std::size_t r, std::size_t c);
/// sum_i weights[i] * terms[i] over 1x1 nodes.
Var weighted_sum(Graph& g, std::span<const Var> terms,
                 std::span<const double> weights);
/// Value copy with no gradient path.
Var detach(Graph& g, Var x);

}  // namespace ad
}  // namespace rlm
