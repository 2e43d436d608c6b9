#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "eve/error.hpp"
#include "eve/tensor.hpp"

namespace eve {

class Graph;

using NodeId = int;

enum class NodeKind { Input, Param, Frozen, Op };

struct Node {
  NodeKind kind = NodeKind::Op;
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;
  std::vector<NodeId> inputs;
  std::function<void(Graph&, Node&)> back;  // empty for leaves
  std::string name;                         // leaves only
  std::vector<double> cache;                // op scratch (e.g. softmax)
  std::vector<int> targets;                 // integer payload
};

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order; backward walks the tape in reverse. Single-threaded per instance.
class Graph {
 public:
  NodeId input(const Tensor& t);
  NodeId param(const std::string& name, const Tensor& t);
  NodeId frozen(const std::string& name, const Tensor& t);

  // elementwise / broadcast
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId a, NodeId bias);  // [m,n] + [1,n]
  NodeId cmul(NodeId a, const Tensor& c);    // multiply by a constant tensor
  NodeId scale(NodeId a, double s);
  NodeId add_const(NodeId a, double c);
  NodeId tanh_op(NodeId a);
  NodeId exp_op(NodeId a);
  NodeId hinge(NodeId a);  // max(0, x), subgradient 0 at 0

  // linear algebra
  NodeId matmul(NodeId a, NodeId b);     // [m,k] x [k,n]
  NodeId matmul_nt(NodeId a, NodeId b);  // [m,k] x [n,k]^T -> [m,n]
  NodeId concat_cols(const std::vector<NodeId>& parts);

  // reductions
  NodeId sum_all(NodeId a);    // -> scalar
  NodeId mean_all(NodeId a);   // -> scalar
  NodeId mean_rows(NodeId a);  // column means, [m,n] -> [1,n]

  // mean over rows of (logsumexp(row) - row[target])
  NodeId softmax_xent(NodeId logits, const std::vector<int>& targets);

  const Tensor value(NodeId id) const;
  const std::vector<double>& values(NodeId id) const { return node(id).val; }
  const Shape& shape(NodeId id) const { return node(id).shape; }
  std::size_t node_count() const { return nodes_.size(); }

  // Forward-only softmax of a logits node (row-wise).
  Tensor softmax_of(NodeId logits) const;

  // Gradients of every trainable parameter w.r.t. a scalar loss node.
  // Frozen and input leaves never appear in the result.
  std::map<std::string, Tensor> backward(NodeId loss);

  Node& node(NodeId id) { return *nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(NodeId id) const { return *nodes_.at(static_cast<std::size_t>(id)); }

 private:
  NodeId push(std::unique_ptr<Node> n);
  NodeId leaf(NodeKind kind, const std::string& name, const Tensor& t);
  std::vector<std::unique_ptr<Node>> nodes_;
};

// Gradient map utilities (clip / norm) live with the optimizer.

}  // namespace eve
