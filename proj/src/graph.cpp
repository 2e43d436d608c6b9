#include "eve/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eve {

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

NodeId Graph::push(std::unique_ptr<Node> n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(NodeKind kind, const std::string& name, const Tensor& t) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->shape = t.shape;
  n->val = t.v;
  n->name = name;
  return push(std::move(n));
}

NodeId Graph::input(const Tensor& t) { return leaf(NodeKind::Input, "", t); }
NodeId Graph::param(const std::string& name, const Tensor& t) {
  return leaf(NodeKind::Param, name, t);
}
NodeId Graph::frozen(const std::string& name, const Tensor& t) {
  return leaf(NodeKind::Frozen, name, t);
}

const Tensor Graph::value(NodeId id) const {
  const Node& n = node(id);
  return Tensor(n.shape, n.val);
}

namespace {

std::unique_ptr<Node> make_op(Shape shape, std::vector<NodeId> inputs,
                              std::function<void(Graph&, Node&)> back) {
  auto n = std::make_unique<Node>();
  n->kind = NodeKind::Op;
  n->shape = std::move(shape);
  n->val.resize(shape_count(n->shape));
  n->inputs = std::move(inputs);
  n->back = std::move(back);
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace

NodeId Graph::add(NodeId a, NodeId b) {
  const Node &na = node(a), &nb = node(b);
  require(na.shape == nb.shape, "add: shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  auto n = make_op(na.shape, {a, b}, [](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ia.grad[i] += self.grad[i];
      ib.grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] + nb.val[i];
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Node &na = node(a), &nb = node(b);
  require(na.shape == nb.shape, "sub: shape mismatch");
  auto n = make_op(na.shape, {a, b}, [](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ia.grad[i] += self.grad[i];
      ib.grad[i] -= self.grad[i];
    }
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] - nb.val[i];
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Node &na = node(a), &nb = node(b);
  require(na.shape == nb.shape, "mul: shape mismatch");
  auto n = make_op(na.shape, {a, b}, [](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ia.grad[i] += self.grad[i] * ib.val[i];
      ib.grad[i] += self.grad[i] * ia.val[i];
    }
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] * nb.val[i];
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId a, NodeId bias) {
  const Node &na = node(a), &nb = node(bias);
  const std::size_t m = na.shape[0], k = na.shape[1];
  require(nb.shape[0] == 1 && nb.shape[1] == k, "add_rowvec: bias shape mismatch");
  auto n = make_op(na.shape, {a, bias}, [m, k](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        ia.grad[r * k + c] += self.grad[r * k + c];
        ib.grad[c] += self.grad[r * k + c];
      }
  });
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) n->val[r * k + c] = na.val[r * k + c] + nb.val[c];
  return push(std::move(n));
}

NodeId Graph::cmul(NodeId a, const Tensor& c) {
  const Node& na = node(a);
  require(na.shape == c.shape, "cmul: constant shape mismatch");
  auto n = make_op(na.shape, {a}, [c](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ia.grad[i] += self.grad[i] * c.v[i];
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] * c.v[i];
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double s) {
  const Node& na = node(a);
  auto n = make_op(na.shape, {a}, [s](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ia.grad[i] += self.grad[i] * s;
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] * s;
  return push(std::move(n));
}

NodeId Graph::add_const(NodeId a, double c) {
  const Node& na = node(a);
  auto n = make_op(na.shape, {a}, [](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ia.grad[i] += self.grad[i];
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = na.val[i] + c;
  return push(std::move(n));
}

NodeId Graph::tanh_op(NodeId a) {
  const Node& na = node(a);
  auto n = make_op(na.shape, {a}, [](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      ia.grad[i] += self.grad[i] * (1.0 - self.val[i] * self.val[i]);
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = std::tanh(na.val[i]);
  return push(std::move(n));
}

NodeId Graph::exp_op(NodeId a) {
  const Node& na = node(a);
  auto n = make_op(na.shape, {a}, [](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ia.grad[i] += self.grad[i] * self.val[i];
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = std::exp(na.val[i]);
  return push(std::move(n));
}

NodeId Graph::hinge(NodeId a) {
  const Node& na = node(a);
  auto n = make_op(na.shape, {a}, [](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (self.val[i] > 0.0) ia.grad[i] += self.grad[i];
  });
  for (std::size_t i = 0; i < n->val.size(); ++i) n->val[i] = std::max(0.0, na.val[i]);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Node &na = node(a), &nb = node(b);
  require(na.shape.size() == 2 && nb.shape.size() == 2 && na.shape[1] == nb.shape[0],
          "matmul: incompatible shapes " + shape_str(na.shape) + " x " + shape_str(nb.shape));
  const std::size_t m = na.shape[0], k = na.shape[1], p = nb.shape[1];
  auto n = make_op({m, p}, {a, b}, [m, k, p](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    // dA = dC * B^T ; dB = A^T * dC
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < p; ++j) {
        const double gij = self.grad[r * p + j];
        if (gij == 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) {
          ia.grad[r * k + c] += gij * ib.val[c * p + j];
          ib.grad[c * p + j] += gij * ia.val[r * k + c];
        }
      }
  });
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      const double av = na.val[r * k + c];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) n->val[r * p + j] += av * nb.val[c * p + j];
    }
  return push(std::move(n));
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  const Node &na = node(a), &nb = node(b);
  require(na.shape.size() == 2 && nb.shape.size() == 2 && na.shape[1] == nb.shape[1],
          "matmul_nt: incompatible shapes");
  const std::size_t m = na.shape[0], k = na.shape[1], p = nb.shape[0];
  auto n = make_op({m, p}, {a, b}, [m, k, p](Graph& g, Node& self) {
    Node &ia = g.node(self.inputs[0]), &ib = g.node(self.inputs[1]);
    // C = A B^T ; dA = dC * B ; dB = dC^T * A
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < p; ++j) {
        const double gij = self.grad[r * p + j];
        if (gij == 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) {
          ia.grad[r * k + c] += gij * ib.val[j * k + c];
          ib.grad[j * k + c] += gij * ia.val[r * k + c];
        }
      }
  });
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += na.val[r * k + c] * nb.val[j * k + c];
      n->val[r * p + j] = acc;
    }
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_cols: empty part list");
  const std::size_t m = node(parts[0]).shape[0];
  std::size_t total = 0;
  for (NodeId p : parts) {
    require(node(p).shape[0] == m, "concat_cols: row mismatch");
    total += node(p).shape[1];
  }
  auto n = make_op({m, total}, parts, [m, total](Graph& g, Node& self) {
    std::size_t off = 0;
    for (NodeId pid : self.inputs) {
      Node& ip = g.node(pid);
      const std::size_t w = ip.shape[1];
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < w; ++c) ip.grad[r * w + c] += self.grad[r * total + off + c];
      off += w;
    }
  });
  std::size_t off = 0;
  for (NodeId pid : parts) {
    const Node& ip = node(pid);
    const std::size_t w = ip.shape[1];
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) n->val[r * total + off + c] = ip.val[r * w + c];
    off += w;
  }
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  const Node& na = node(a);
  auto n = make_op({1, 1}, {a}, [](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    for (auto& gr : ia.grad) gr += self.grad[0];
  });
  double acc = 0.0;
  for (double x : na.val) acc += x;
  n->val[0] = acc;
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId a) {
  const std::size_t cnt = node(a).val.size();
  return scale(sum_all(a), 1.0 / static_cast<double>(cnt));
}

NodeId Graph::mean_rows(NodeId a) {
  const Node& na = node(a);
  require(na.shape.size() == 2, "mean_rows: rank-2 input required");
  const std::size_t m = na.shape[0], k = na.shape[1];
  auto n = make_op({1, k}, {a}, [m, k](Graph& g, Node& self) {
    Node& ia = g.node(self.inputs[0]);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c) ia.grad[r * k + c] += self.grad[c] * inv;
  });
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t c = 0; c < k; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m; ++r) acc += na.val[r * k + c];
    n->val[c] = acc * inv;
  }
  return push(std::move(n));
}

Tensor Graph::softmax_of(NodeId logits) const {
  const Node& nl = node(logits);
  const std::size_t m = nl.shape[0], v = nl.shape[1];
  Tensor out({m, v});
  for (std::size_t r = 0; r < m; ++r) {
    double mx = nl.val[r * v];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, nl.val[r * v + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(nl.val[r * v + c] - mx);
    for (std::size_t c = 0; c < v; ++c) out.v[r * v + c] = std::exp(nl.val[r * v + c] - mx) / z;
  }
  return out;
}

NodeId Graph::softmax_xent(NodeId logits, const std::vector<int>& targets) {
  const Node& nl = node(logits);
  require(nl.shape.size() == 2, "softmax_xent: rank-2 logits required");
  const std::size_t m = nl.shape[0], v = nl.shape[1];
  require(targets.size() == m, "softmax_xent: one target per row required");
  for (int t : targets)
    require(t >= 0 && static_cast<std::size_t>(t) < v, "softmax_xent: target out of range");

  auto n = make_op({1, 1}, {logits}, [m, v](Graph& g, Node& self) {
    Node& il = g.node(self.inputs[0]);
    const double gscale = self.grad[0] / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < v; ++c) {
        double p = self.cache[r * v + c];
        if (static_cast<std::size_t>(self.targets[r]) == c) p -= 1.0;
        il.grad[r * v + c] += gscale * p;
      }
  });
  n->targets = targets;
  n->cache = softmax_of(logits).v;
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    loss -= std::log(n->cache[r * v + static_cast<std::size_t>(targets[r])]);
  n->val[0] = loss / static_cast<double>(m);
  return push(std::move(n));
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) {
  Node& ln = node(loss);
  if (shape_count(ln.shape) != 1)
    throw ContractViolation("backward: loss node must be scalar, got " + shape_str(ln.shape));
  if (!std::isfinite(ln.val[0]))
    throw NumericError("backward: non-finite loss at node " + std::to_string(loss));

  for (auto& n : nodes_) {
    n->grad.assign(n->val.size(), 0.0);
  }
  ln.grad[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.back) n.back(*this, n);
  }
  std::map<std::string, Tensor> grads;
  for (auto& n : nodes_)
    if (n->kind == NodeKind::Param) grads.emplace(n->name, Tensor(n->shape, n->grad));
  return grads;
}

}  // namespace eve
