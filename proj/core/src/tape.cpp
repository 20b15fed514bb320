#include "odekin/tape.hpp"

#include <string>
#include <utility>

#include "odekin/errors.hpp"

namespace odekin {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Hadamard: return "hadamard";
    case OpKind::Tanh: return "tanh";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
  }
  return "?";
}

void Tape::check_id(NodeId id, const char* who) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw DimensionError(std::string(who) + ": invalid node id " + std::to_string(id));
  }
}

NodeId Tape::leaf(Tensor value) {
  value.require_finite("leaf");
  nodes_.push_back(Node{OpKind::Leaf, -1, -1, 0.0, std::move(value)});
  const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  leaves_.push_back(id);
  return id;
}

NodeId Tape::record(OpKind op, NodeId a, NodeId b, double scalar) {
  if (op == OpKind::Leaf) {
    throw DimensionError("record: use leaf() to create leaf nodes");
  }
  check_id(a, op_name(op));
  const Tensor& av = nodes_[a].value;

  Tensor out;
  switch (op) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Hadamard: {
      check_id(b, op_name(op));
      const Tensor& bv = nodes_[b].value;
      out = op == OpKind::Add   ? odekin::add(av, bv)
            : op == OpKind::Sub ? odekin::sub(av, bv)
                                : odekin::hadamard(av, bv);
      break;
    }
    case OpKind::MatMul: {
      check_id(b, op_name(op));
      out = odekin::matmul(av, nodes_[b].value);
      break;
    }
    case OpKind::Scale: out = odekin::scale(av, scalar); break;
    case OpKind::Tanh: out = tanh_ew(av); break;
    case OpKind::Square: out = square_ew(av); break;
    case OpKind::Sum: out = sum_all(av); break;
    case OpKind::Leaf: break;  // unreachable
  }
  out.require_finite(op_name(op));
  nodes_.push_back(Node{op, a, b, scalar, std::move(out)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::value(NodeId id) const {
  check_id(id, "value");
  return nodes_[id].value;
}

namespace {

void accumulate(std::vector<Tensor>& adjoints, NodeId p, Tensor contribution) {
  if (adjoints[p].empty()) {
    adjoints[p] = std::move(contribution);
  } else {
    add_in_place(adjoints[p], contribution);
  }
}

// Adjoint of one operand of an elementwise op: collapses to 1x1 when the
// operand was scalar-broadcast against a larger node.
Tensor reduce_to(const Tensor& adj, const Tensor& operand) {
  if (operand.same_shape(adj)) return adj;
  return sum_all(adj);  // operand is 1x1
}

}  // namespace

void Tape::sweep(NodeId root, std::vector<Tensor>& adjoints,
                 const std::vector<char>& leaf_wanted) const {
  check_id(root, "backward");
  if (!nodes_[root].value.is_scalar()) {
    throw DimensionError("backward: root must be scalar, got " +
                         nodes_[root].value.shape_str());
  }

  adjoints.assign(nodes_.size(), Tensor());
  adjoints[root] = Tensor::scalar(1.0);

  auto wants = [&](NodeId p) {
    return nodes_[p].op != OpKind::Leaf || leaf_wanted.empty() || leaf_wanted[p];
  };

  for (NodeId id = root; id >= 0; --id) {
    const Node& node = nodes_[id];
    if (node.op == OpKind::Leaf || adjoints[id].empty()) continue;
    const Tensor& adj = adjoints[id];
    const Tensor& av = nodes_[node.a].value;

    switch (node.op) {
      case OpKind::Add: {
        const Tensor& bv = nodes_[node.b].value;
        if (wants(node.a)) accumulate(adjoints, node.a, reduce_to(adj, av));
        if (wants(node.b)) accumulate(adjoints, node.b, reduce_to(adj, bv));
        break;
      }
      case OpKind::Sub: {
        const Tensor& bv = nodes_[node.b].value;
        if (wants(node.a)) accumulate(adjoints, node.a, reduce_to(adj, av));
        if (wants(node.b)) accumulate(adjoints, node.b, odekin::scale(reduce_to(adj, bv), -1.0));
        break;
      }
      case OpKind::Hadamard: {
        const Tensor& bv = nodes_[node.b].value;
        if (wants(node.a)) accumulate(adjoints, node.a, reduce_to(odekin::hadamard(adj, bv), av));
        if (wants(node.b)) accumulate(adjoints, node.b, reduce_to(odekin::hadamard(adj, av), bv));
        break;
      }
      case OpKind::Scale:
        accumulate(adjoints, node.a, odekin::scale(adj, node.scalar));
        break;
      case OpKind::MatMul: {
        const Tensor& bv = nodes_[node.b].value;
        if (wants(node.a)) accumulate(adjoints, node.a, matmul_nt(adj, bv));
        if (wants(node.b)) accumulate(adjoints, node.b, matmul_tn(av, adj));
        break;
      }
      case OpKind::Tanh: {
        const Tensor& y = node.value;
        Tensor da(y.rows(), y.cols());
        auto yv = y.values(), gv = adj.values();
        auto dv = da.values();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = gv[i] * (1.0 - yv[i] * yv[i]);
        accumulate(adjoints, node.a, std::move(da));
        break;
      }
      case OpKind::Square: {
        Tensor da(av.rows(), av.cols());
        auto xv = av.values(), gv = adj.values();
        auto dv = da.values();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = 2.0 * xv[i] * gv[i];
        accumulate(adjoints, node.a, std::move(da));
        break;
      }
      case OpKind::Sum:
        accumulate(adjoints, node.a, Tensor::filled(av.rows(), av.cols(), adj(0, 0)));
        break;
      case OpKind::Leaf:
        break;
    }
  }
}

std::unordered_map<NodeId, Tensor> Tape::backward(NodeId root) const {
  std::vector<Tensor> adjoints;
  sweep(root, adjoints, {});
  std::unordered_map<NodeId, Tensor> grads;
  grads.reserve(leaves_.size());
  for (NodeId leaf : leaves_) {
    if (adjoints[leaf].empty()) {
      grads.emplace(leaf, Tensor(nodes_[leaf].value.rows(), nodes_[leaf].value.cols()));
    } else {
      grads.emplace(leaf, std::move(adjoints[leaf]));
    }
  }
  return grads;
}

std::vector<Tensor> Tape::backward(NodeId root, std::span<const NodeId> wanted) const {
  std::vector<char> leaf_wanted(nodes_.size(), 0);
  for (NodeId id : wanted) {
    check_id(id, "backward");
    if (nodes_[id].op != OpKind::Leaf) {
      throw DimensionError("backward: node " + std::to_string(id) + " is not a leaf");
    }
    leaf_wanted[id] = 1;
  }
  std::vector<Tensor> adjoints;
  sweep(root, adjoints, leaf_wanted);
  std::vector<Tensor> grads;
  grads.reserve(wanted.size());
  for (NodeId id : wanted) {
    if (adjoints[id].empty()) {
      grads.emplace_back(nodes_[id].value.rows(), nodes_[id].value.cols());
    } else {
      grads.emplace_back(std::move(adjoints[id]));
    }
  }
  return grads;
}

void Tape::reset() {
  nodes_.clear();
  leaves_.clear();
}

}  // namespace odekin
