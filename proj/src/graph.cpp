#include "cora/graph.hpp"

#include <cmath>
#include <string>

#include "cora/errors.hpp"

namespace cora {

namespace {

Tensor2 map_values(const Tensor2& a, double (*fn)(double), const char* what) {
  Tensor2 out = a;
  for (auto& v : out.data()) v = fn(v);
  require_finite(out, what);
  return out;
}

double tanh_fn(double x) { return std::tanh(x); }
double exp_fn(double x) { return std::exp(x); }
double silu_fn(double x) { return cora::silu(x); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw ContractError("Graph: node id " + std::to_string(id.index) + " out of range");
  }
  return nodes_[id.index];
}

NodeId Graph::push(OpKind op, Tensor2 value, std::initializer_list<NodeId> parents) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (NodeId p : parents) {
    const Node& parent = node(p);
    n.parents[static_cast<std::size_t>(n.parent_count++)] = p.index;
    n.requires_grad = n.requires_grad || parent.requires_grad;
  }
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

NodeId Graph::constant(Tensor2 value) {
  require_finite(value, "Graph::constant");
  return push(OpKind::kConstant, std::move(value), {});
}

NodeId Graph::parameter(Tensor2 value) {
  require_finite(value, "Graph::parameter");
  NodeId id = push(OpKind::kParameter, std::move(value), {});
  nodes_[id.index].requires_grad = true;
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  return push(OpKind::kMatMul, cora::matmul(value(a), value(b)), {a, b});
}

NodeId Graph::transpose(NodeId a) {
  return push(OpKind::kTranspose, cora::transpose(value(a)), {a});
}

NodeId Graph::add(NodeId a, NodeId b) { return push(OpKind::kAdd, cora::add(value(a), value(b)), {a, b}); }

NodeId Graph::sub(NodeId a, NodeId b) { return push(OpKind::kSub, cora::sub(value(a), value(b)), {a, b}); }

NodeId Graph::add_row(NodeId a, NodeId row) {
  return push(OpKind::kAddRow, add_row_broadcast(value(a), value(row)), {a, row});
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
  return push(OpKind::kHadamard, cora::hadamard(value(a), value(b)), {a, b});
}

NodeId Graph::scale(NodeId a, double s) {
  NodeId id = push(OpKind::kScale, cora::scale(value(a), s), {a});
  nodes_[id.index].scalar = s;
  return id;
}

NodeId Graph::add_scalar(NodeId a, double s) {
  Tensor2 out = value(a);
  for (auto& v : out.data()) v += s;
  require_finite(out, "add_scalar");
  NodeId id = push(OpKind::kAddScalar, std::move(out), {a});
  nodes_[id.index].scalar = s;
  return id;
}

NodeId Graph::scale_by(NodeId a, NodeId s) {
  const Tensor2& sv = value(s);
  if (sv.rows() != 1 || sv.cols() != 1) {
    throw DimensionError("scale_by: scalar node must be [1x1], got " + sv.shape_string());
  }
  return push(OpKind::kScaleBy, cora::scale(value(a), sv[0]), {a, s});
}

NodeId Graph::tanh(NodeId a) { return push(OpKind::kTanh, map_values(value(a), tanh_fn, "tanh"), {a}); }

NodeId Graph::silu(NodeId a) { return push(OpKind::kSilu, map_values(value(a), silu_fn, "silu"), {a}); }

NodeId Graph::exp(NodeId a) { return push(OpKind::kExp, map_values(value(a), exp_fn, "exp"), {a}); }

NodeId Graph::softmax_rows(NodeId a) {
  const Tensor2& x = value(a);
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto s = cora::softmax(x.row(i));
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return push(OpKind::kSoftmaxRows, std::move(out), {a});
}

NodeId Graph::sum(NodeId a) {
  double total = 0.0;
  for (double v : value(a).data()) total += v;
  Tensor2 out(1, 1, total);
  require_finite(out, "sum");
  return push(OpKind::kSum, std::move(out), {a});
}

NodeId Graph::mean(NodeId a) {
  const Tensor2& x = value(a);
  if (x.empty()) throw DomainError("mean: empty input");
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor2 out(1, 1, total / static_cast<double>(x.size()));
  require_finite(out, "mean");
  return push(OpKind::kMean, std::move(out), {a});
}

NodeId Graph::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
  NodeId id = push(OpKind::kSliceRows, cora::slice_rows(value(a), begin, end), {a});
  nodes_[id.index].begin = begin;
  nodes_[id.index].end = end;
  return id;
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
  NodeId id = push(OpKind::kSliceCols, cora::slice_cols(value(a), begin, end), {a});
  nodes_[id.index].begin = begin;
  nodes_[id.index].end = end;
  return id;
}

NodeId Graph::mse(NodeId prediction, NodeId target) {
  const Tensor2& p = value(prediction);
  const Tensor2& t = value(target);
  if (!p.same_shape(t)) {
    throw DimensionError("mse: shape mismatch " + p.shape_string() + " vs " + t.shape_string());
  }
  if (p.empty()) throw DomainError("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    total += d * d;
  }
  Tensor2 out(1, 1, total / static_cast<double>(p.size()));
  require_finite(out, "mse");
  return push(OpKind::kMse, std::move(out), {prediction, target});
}

const Tensor2& Graph::value(NodeId id) const { return node(id).value; }

bool Graph::requires_grad(NodeId id) const { return node(id).requires_grad; }

bool Graph::has_grad(NodeId id) const { return node(id).has_grad; }

const Tensor2& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.has_grad) {
    throw ContractError("Graph: node " + std::to_string(id.index) + " has no gradient");
  }
  return n.grad;
}

void Graph::accumulate(std::size_t index, const Tensor2& g) {
  Node& target = nodes_[index];
  if (!target.requires_grad) return;
  if (!target.has_grad) {
    target.grad = g;
    target.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) target.grad[i] += g[i];
}

void Graph::backward(NodeId root) {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractError("backward: root must be scalar [1x1], got " + r.value.shape_string());
  }
  for (auto& n : nodes_) {
    n.grad = Tensor2();
    n.has_grad = false;
  }
  if (!r.requires_grad) return;
  nodes_[root.index].grad = Tensor2(1, 1, 1.0);
  nodes_[root.index].has_grad = true;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.has_grad && n.parent_count > 0) propagate(n);
  }
}

void Graph::propagate(const Node& n) {
  const Tensor2& g = n.grad;
  const std::size_t p0 = n.parents[0];
  const std::size_t p1 = n.parents[1];
  auto needs = [&](std::size_t p) { return nodes_[p].requires_grad; };

  switch (n.op) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;
    case OpKind::kMatMul: {
      const Tensor2& a = nodes_[p0].value;
      const Tensor2& b = nodes_[p1].value;
      if (needs(p0)) accumulate(p0, cora::matmul(g, cora::transpose(b)));
      if (needs(p1)) accumulate(p1, cora::matmul(cora::transpose(a), g));
      break;
    }
    case OpKind::kTranspose:
      accumulate(p0, cora::transpose(g));
      break;
    case OpKind::kAdd:
      accumulate(p0, g);
      accumulate(p1, g);
      break;
    case OpKind::kSub:
      accumulate(p0, g);
      if (needs(p1)) accumulate(p1, cora::scale(g, -1.0));
      break;
    case OpKind::kAddRow: {
      accumulate(p0, g);
      if (needs(p1)) {
        Tensor2 col_sums(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) col_sums[j] += g(i, j);
        accumulate(p1, col_sums);
      }
      break;
    }
    case OpKind::kHadamard:
      if (needs(p0)) accumulate(p0, cora::hadamard(g, nodes_[p1].value));
      if (needs(p1)) accumulate(p1, cora::hadamard(g, nodes_[p0].value));
      break;
    case OpKind::kScale:
      accumulate(p0, cora::scale(g, n.scalar));
      break;
    case OpKind::kAddScalar:
      accumulate(p0, g);
      break;
    case OpKind::kScaleBy: {
      const double s = nodes_[p1].value[0];
      if (needs(p0)) accumulate(p0, cora::scale(g, s));
      if (needs(p1)) {
        const Tensor2& a = nodes_[p0].value;
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) total += g[i] * a[i];
        accumulate(p1, Tensor2(1, 1, total));
      }
      break;
    }
    case OpKind::kTanh: {
      Tensor2 d = g;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - n.value[i] * n.value[i];
      accumulate(p0, d);
      break;
    }
    case OpKind::kSilu: {
      const Tensor2& x = nodes_[p0].value;
      Tensor2 d = g;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double s = sigmoid(x[i]);
        d[i] *= s * (1.0 + x[i] * (1.0 - s));
      }
      accumulate(p0, d);
      break;
    }
    case OpKind::kExp:
      accumulate(p0, cora::hadamard(g, n.value));
      break;
    case OpKind::kSoftmaxRows: {
      const Tensor2& y = n.value;
      Tensor2 d(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
      }
      accumulate(p0, d);
      break;
    }
    case OpKind::kSum: {
      const Tensor2& a = nodes_[p0].value;
      accumulate(p0, Tensor2(a.rows(), a.cols(), g[0]));
      break;
    }
    case OpKind::kMean: {
      const Tensor2& a = nodes_[p0].value;
      accumulate(p0, Tensor2(a.rows(), a.cols(), g[0] / static_cast<double>(a.size())));
      break;
    }
    case OpKind::kSliceRows: {
      const Tensor2& a = nodes_[p0].value;
      Tensor2 d(a.rows(), a.cols());
      for (std::size_t i = n.begin; i < n.end; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) d(i, j) = g(i - n.begin, j);
      accumulate(p0, d);
      break;
    }
    case OpKind::kSliceCols: {
      const Tensor2& a = nodes_[p0].value;
      Tensor2 d(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = n.begin; j < n.end; ++j) d(i, j) = g(i, j - n.begin);
      accumulate(p0, d);
      break;
    }
    case OpKind::kMse: {
      const Tensor2& p = nodes_[p0].value;
      const Tensor2& t = nodes_[p1].value;
      const double k = 2.0 * g[0] / static_cast<double>(p.size());
      Tensor2 d(p.rows(), p.cols());
      for (std::size_t i = 0; i < p.size(); ++i) d[i] = k * (p[i] - t[i]);
      if (needs(p0)) accumulate(p0, d);
      if (needs(p1)) accumulate(p1, cora::scale(d, -1.0));
      break;
    }
  }
}

}  // namespace cora
