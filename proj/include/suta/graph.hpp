#pragma once

// Reverse-mode differentiation over dense 2-D tensors.
//
// A Graph is a tape: every op appends a node whose inputs are earlier nodes,
// so node order is already a topological order. backward() walks the tape
// once in reverse and returns gradients for the leaves created with
// requires_grad. Gradients live only inside a backward call; a Graph has no
// hidden state between passes.

#include <cstddef>
#include <array>
#include <map>
#include <span>
#include <vector>

#include "suta/tensor.hpp"

namespace suta::grad {

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  MatMul,
  Add,        // same shape, or the second operand broadcast as 1xC, Rx1 or 1x1
  Multiply,   // same broadcasting as Add
  Scale,      // attrs.scalar
  Negate,
  Exp,
  Log,        // log(max(x, attrs.floor))
  Relu,
  Gelu,       // tanh approximation
  RowMean,    // RxC -> Rx1
  RowVariance,  // population variance, RxC -> Rx1
  Sum,        // -> 1x1
  Mean,       // -> 1x1
  Transpose,
  RowMaskSelect,  // keeps attrs.rows, in order
  ConcatRows,
  Conv1d,     // inputs (x TxCin, w KCin x Cout, b 1xCout); attrs.stride, attrs.padding
  LayerNorm,  // inputs (x, gamma 1xD, beta 1xD); attrs.eps
  SoftmaxRows,
  LogSoftmaxRows,
  CtcLoss,    // input LxC log-probabilities; attrs.target, attrs.blank
};

const char* op_name(OpKind kind);

struct OpAttrs {
  double scalar = 1.0;
  double floor = 1e-12;
  double eps = 1e-5;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> target;
  std::size_t blank = 0;
};

// Leaf id -> gradient of the scalar loss with respect to that leaf.
using GradientMap = std::map<NodeId, Tensor>;

// Output length of a time-axis convolution.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);

class Graph {
 public:
  NodeId input(Tensor value, bool requires_grad = false);

  // Generic entry point; the named helpers below forward here.
  NodeId apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs = {});

  NodeId matmul(NodeId a, NodeId b) { return apply2(OpKind::MatMul, a, b); }
  NodeId add(NodeId a, NodeId b) { return apply2(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return add(a, negate(b)); }
  NodeId multiply(NodeId a, NodeId b) { return apply2(OpKind::Multiply, a, b); }
  NodeId scale(NodeId a, double s);
  NodeId negate(NodeId a) { return apply1(OpKind::Negate, a); }
  NodeId exp(NodeId a) { return apply1(OpKind::Exp, a); }
  NodeId log(NodeId a, double floor = 1e-12);
  NodeId relu(NodeId a) { return apply1(OpKind::Relu, a); }
  NodeId gelu(NodeId a) { return apply1(OpKind::Gelu, a); }
  NodeId row_mean(NodeId a) { return apply1(OpKind::RowMean, a); }
  NodeId row_variance(NodeId a) { return apply1(OpKind::RowVariance, a); }
  NodeId sum(NodeId a) { return apply1(OpKind::Sum, a); }
  NodeId mean(NodeId a) { return apply1(OpKind::Mean, a); }
  NodeId transpose(NodeId a) { return apply1(OpKind::Transpose, a); }
  NodeId row_select(NodeId a, std::vector<std::size_t> rows);
  NodeId concat_rows(NodeId a, NodeId b) { return apply2(OpKind::ConcatRows, a, b); }
  NodeId conv1d(NodeId x, NodeId weight, NodeId bias, std::size_t stride, std::size_t padding);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId softmax_rows(NodeId a) { return apply1(OpKind::SoftmaxRows, a); }
  NodeId log_softmax_rows(NodeId a) { return apply1(OpKind::LogSoftmaxRows, a); }
  NodeId ctc_loss(NodeId log_probs, std::vector<std::size_t> target, std::size_t blank);

  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::span<const NodeId> inputs(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  GradientMap backward(NodeId loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
    Tensor cache;  // op-specific saved activations (softmax, ln x_hat, ctc grad, ...)
    std::vector<double> aux;
    bool requires_grad = false;
  };

  NodeId apply1(OpKind kind, NodeId a, const OpAttrs& attrs = {}) {
    const std::array<NodeId, 1> ids{a};
    return apply(kind, ids, attrs);
  }
  NodeId apply2(OpKind kind, NodeId a, NodeId b) {
    const std::array<NodeId, 2> ids{a, b};
    return apply(kind, ids);
  }
  void check_id(NodeId id) const;
  void backprop_node(const Node& node, const Tensor& gout, std::vector<Tensor>& grads,
                     std::vector<bool>& has_grad) const;

  std::vector<Node> nodes_;
};

}  // namespace suta::grad
