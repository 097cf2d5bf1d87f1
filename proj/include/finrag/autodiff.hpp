#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "finrag/common.hpp"

namespace finrag::ad {

// Reverse-mode tape over flat double vectors. Nodes are created eagerly
// (forward values computed at construction); backward() walks the tape in
// reverse. Matrices are flattened row-major and carry their shape per op.
class Tape {
 public:
  using NodeId = int;

  NodeId constant(std::vector<double> v);  // no gradient flows into it
  NodeId leaf(const std::vector<double>& v);

  NodeId matvec(NodeId m, NodeId x, int rows, int cols);    // M x
  NodeId matvec_t(NodeId m, NodeId x, int rows, int cols);  // M^T x
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId slice(NodeId a, int offset, int len);
  NodeId concat(const std::vector<NodeId>& parts);
  // s_j = u . keys[j]
  NodeId dots(NodeId u, const std::vector<NodeId>& keys);
  // sum_j w_j keys[j]
  NodeId weighted_sum(NodeId w, const std::vector<NodeId>& keys);
  NodeId softmax(NodeId scores);
  // -log softmax(logits restricted to valid)[gold]; invalid entries get
  // exactly zero probability. Probabilities are kept for inspection.
  NodeId masked_cross_entropy(NodeId logits, std::vector<uint8_t> valid, int gold);
  NodeId mean(const std::vector<NodeId>& scalars);

  const std::vector<double>& value(NodeId id) const { return nodes_[id].val; }
  const std::vector<double>& grad(NodeId id) const { return nodes_[id].grad; }
  // Masked probabilities stored by masked_cross_entropy.
  const std::vector<double>& probabilities(NodeId ce_node) const {
    return nodes_[ce_node].scratch;
  }

  void backward(NodeId loss);

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Const,
    Leaf,
    MatVec,
    MatVecT,
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Slice,
    Concat,
    Dots,
    WeightedSum,
    Softmax,
    MaskedCE,
    Mean,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    std::vector<NodeId> list;
    int aux0 = 0;
    int aux1 = 0;
    std::vector<double> val;
    std::vector<double> grad;
    std::vector<double> scratch;
    std::vector<uint8_t> mask;
  };

  NodeId push(Node n);
  std::vector<Node> nodes_;
};

// Softmax over the valid entries of `logits`; invalid entries are exactly 0.
std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<uint8_t>& valid);

}  // namespace finrag::ad
