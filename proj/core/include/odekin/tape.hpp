#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "odekin/tensor.hpp"

namespace odekin {

using NodeId = int;

enum class OpKind { Leaf, Add, Sub, Scale, MatMul, Hadamard, Tanh, Square, Sum };

const char* op_name(OpKind op);

/// Reverse-mode computation graph over Tensors.
///
/// Operations are recorded in topological order (parents always precede
/// children) with forward values computed eagerly and cached on the tape, so
/// the backward pass is a single reverse sweep with no recomputation. A tape
/// must stay on one thread; distinct tapes share no state.
class Tape {
 public:
  /// Differentiable leaf. The value must be finite throughout.
  NodeId leaf(Tensor value);

  /// Records one primitive. `b` is ignored by unary ops; `scalar` is the
  /// factor for Scale. Shapes are validated and the forward value is checked
  /// finite before the node lands on the tape.
  NodeId record(OpKind op, NodeId a, NodeId b = -1, double scalar = 0.0);

  NodeId add(NodeId a, NodeId b) { return record(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return record(OpKind::Sub, a, b); }
  NodeId scale(NodeId a, double c) { return record(OpKind::Scale, a, -1, c); }
  NodeId matmul(NodeId a, NodeId b) { return record(OpKind::MatMul, a, b); }
  NodeId hadamard(NodeId a, NodeId b) { return record(OpKind::Hadamard, a, b); }
  NodeId tanh(NodeId a) { return record(OpKind::Tanh, a); }
  NodeId square(NodeId a) { return record(OpKind::Square, a); }
  NodeId sum(NodeId a) { return record(OpKind::Sum, a); }

  const Tensor& value(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradients of the scalar node `root` with respect to every leaf.
  /// Leaves that do not feed `root` get zero gradients of their own shape.
  std::unordered_map<NodeId, Tensor> backward(NodeId root) const;

  /// Gradients restricted to `wanted` leaf ids, in their given order.
  /// Adjoint work that only feeds other leaves is skipped.
  std::vector<Tensor> backward(NodeId root, std::span<const NodeId> wanted) const;

  /// Drops every node. Capacity is kept for re-recording.
  void reset();

 private:
  struct Node {
    OpKind op;
    NodeId a = -1, b = -1;
    double scalar = 0.0;
    Tensor value;
  };

  void check_id(NodeId id, const char* who) const;
  void sweep(NodeId root, std::vector<Tensor>& adjoints,
             const std::vector<char>& leaf_wanted) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
};

}  // namespace odekin
