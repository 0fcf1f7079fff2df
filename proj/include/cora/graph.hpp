#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cora/tensor.hpp"

namespace cora {

struct NodeId {
  std::size_t index = 0;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kAddRow,
  kHadamard,
  kScale,
  kAddScalar,
  kScaleBy,
  kTanh,
  kSilu,
  kExp,
  kSoftmaxRows,
  kSum,
  kMean,
  kSliceRows,
  kSliceCols,
  kMse,
};

/// Append-only reverse-mode tape. Build one per minibatch and discard it.
///
/// Constants never receive a gradient; parameters always do. Any other node
/// requires a gradient iff one of its parents does, so frozen inputs (backbone
/// weights recorded as constants) have no recorded path back from the loss.
class Graph {
 public:
  NodeId constant(Tensor2 value);
  NodeId parameter(Tensor2 value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  /// a (r x c) + row (1 x c), broadcast over rows.
  NodeId add_row(NodeId a, NodeId row);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double s);
  /// a * s where s is a 1 x 1 node.
  NodeId scale_by(NodeId a, NodeId s);
  NodeId tanh(NodeId a);
  NodeId silu(NodeId a);
  NodeId exp(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
  /// Mean of squared differences, 1 x 1.
  NodeId mse(NodeId prediction, NodeId target);

  const Tensor2& value(NodeId id) const;
  bool requires_grad(NodeId id) const;
  /// True once backward() has reached this node with a gradient.
  bool has_grad(NodeId id) const;
  /// Throws ContractError when the node has no gradient.
  const Tensor2& grad(NodeId id) const;

  /// Reverse sweep from a 1 x 1 root. Gradients from multiple consumers sum.
  void backward(NodeId root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    std::array<std::size_t, 2> parents{};
    int parent_count = 0;
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
    bool has_grad = false;
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  NodeId push(OpKind op, Tensor2 value, std::initializer_list<NodeId> parents);
  const Node& node(NodeId id) const;
  void accumulate(std::size_t index, const Tensor2& g);
  void propagate(const Node& n);

  std::vector<Node> nodes_;
};

}  // namespace cora
