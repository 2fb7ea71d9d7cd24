#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "ctmos/tensor.hpp"

namespace ctmos {

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
/// so the creation order is already topological; backward() walks it once in
/// reverse. One backward pass per graph instance.
class Graph {
 public:
  using NodeId = int;

  NodeId leaf(Tensor t);

  const Tensor& val(NodeId id) const { return nodes_[id].value; }
  /// Gradient of the last backward() loss w.r.t. node id (zeros if unreached).
  const Tensor& grad(NodeId id);

  // --- primitives -------------------------------------------------------
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  /// Element-wise division a ./ b with gradients to both operands.
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  /// a (m x n) + bias (n) broadcast over rows.
  NodeId add_row(NodeId a, NodeId bias);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId tanh_op(NodeId a);
  NodeId exp_op(NodeId a);
  NodeId sigmoid_op(NodeId a);
  NodeId softmax(NodeId a, int axis);
  /// Embedding lookup: rows of table (V x d) selected by ids.
  NodeId gather_rows(NodeId table, std::vector<int> ids);
  NodeId slice_cols(NodeId a, int c0, int c1);
  NodeId slice_rows(NodeId a, int r0, int r1);
  /// Stack matrices with equal column counts on top of each other.
  NodeId concat_rows(const std::vector<NodeId>& parts);
  /// out[i,j] = a[i,j] * s[i], s a length-m vector (or m x 1).
  NodeId scale_rows(NodeId a, NodeId s);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_sq(NodeId a);
  NodeId mean_sq(NodeId a);
  /// Per-row -ln(max(P[i, targets[i]], floor)); clamped rows get zero
  /// gradient and bump *clamp_count when provided.
  NodeId neg_log_pick(NodeId probs, std::vector<int> targets, double floor,
                      long* clamp_count = nullptr);

  /// Accumulates d(loss)/d(leaf) into every reachable node's gradient.
  void backward(NodeId loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    std::vector<NodeId> inputs;
    std::function<void(Graph&, NodeId)> back;
  };

  NodeId push(Tensor value, std::vector<NodeId> inputs,
              std::function<void(Graph&, NodeId)> back);
  Tensor& gref(NodeId id);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace ctmos
