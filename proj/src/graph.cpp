#include "suta/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "suta/errors.hpp"

namespace suta::grad {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

bool broadcastable(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return true;
  if (b.rows == 1 && b.cols == 1) return true;
  if (b.rows == 1 && b.cols == a.cols) return true;
  if (b.cols == 1 && b.rows == a.rows) return true;
  return false;
}

std::size_t bcast_index(const Tensor& b, std::size_t r, std::size_t c) {
  return (b.rows == 1 ? 0 : r) * b.cols + (b.cols == 1 ? 0 : c);
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* orow = out.values.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.values.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a^T * b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* brow = b.values.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* orow = out.values.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.values.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.values.data() + j * b.cols;
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluC * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
}

std::size_t ctc_repeats(const std::vector<std::size_t>& target) {
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  return repeats;
}

// Forward-backward over the blank-augmented target. Returns the loss and
// writes d(loss)/d(log_probs) into `grad`.
double ctc_forward_backward(const Tensor& lp, const std::vector<std::size_t>& target,
                            std::size_t blank, Tensor& grad) {
  const std::size_t frames = lp.rows;
  const std::size_t labels = 2 * target.size() + 1;
  auto label_at = [&](std::size_t s) { return s % 2 == 0 ? blank : target[s / 2]; };
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && s % 2 == 1 && target[s / 2] != target[s / 2 - 1];
  };

  std::vector<double> alpha(frames * labels, kNegInf);
  std::vector<double> beta(frames * labels, kNegInf);
  auto A = [&](std::size_t t, std::size_t s) -> double& { return alpha[t * labels + s]; };
  auto B = [&](std::size_t t, std::size_t s) -> double& { return beta[t * labels + s]; };

  A(0, 0) = lp(0, blank);
  if (labels > 1) A(0, 1) = lp(0, label_at(1));
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < labels; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = log_add(acc, A(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, A(t - 1, s - 2));
      if (acc != kNegInf) A(t, s) = acc + lp(t, label_at(s));
    }
  }

  const std::size_t last = frames - 1;
  B(last, labels - 1) = lp(last, label_at(labels - 1));
  if (labels > 1) B(last, labels - 2) = lp(last, label_at(labels - 2));
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t s = 0; s < labels; ++s) {
      double acc = B(t + 1, s);
      if (s + 1 < labels) acc = log_add(acc, B(t + 1, s + 1));
      if (s + 2 < labels && can_skip(s + 2)) acc = log_add(acc, B(t + 1, s + 2));
      if (acc != kNegInf) B(t, s) = acc + lp(t, label_at(s));
    }
  }

  double log_total = A(last, labels - 1);
  if (labels > 1) log_total = log_add(log_total, A(last, labels - 2));
  if (log_total == kNegInf) throw DataError("ctc: target has zero probability under the inputs");

  grad = Tensor(lp.rows, lp.cols);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < labels; ++s) {
      const double occ = A(t, s) + B(t, s);
      if (occ == kNegInf) continue;
      const std::size_t k = label_at(s);
      grad(t, k) -= std::exp(occ - lp(t, k) - log_total);
    }
  }
  return -log_total;
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Multiply: return "multiply";
    case OpKind::Scale: return "scale";
    case OpKind::Negate: return "negate";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Relu: return "relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::RowMean: return "row_mean";
    case OpKind::RowVariance: return "row_variance";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Transpose: return "transpose";
    case OpKind::RowMaskSelect: return "row_mask_select";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LogSoftmaxRows: return "log_softmax_rows";
    case OpKind::CtcLoss: return "ctc_loss";
  }
  return "unknown";
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
  SUTA_REQUIRE(kernel >= 1 && stride >= 1, "conv1d: kernel and stride must be >= 1");
  const std::size_t padded = length + 2 * padding;
  if (padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

NodeId Graph::input(Tensor value, bool requires_grad) {
  Node node;
  node.kind = OpKind::Leaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::scale(NodeId a, double s) {
  OpAttrs attrs;
  attrs.scalar = s;
  return apply1(OpKind::Scale, a, attrs);
}

NodeId Graph::log(NodeId a, double floor) {
  OpAttrs attrs;
  attrs.floor = floor;
  return apply1(OpKind::Log, a, attrs);
}

NodeId Graph::row_select(NodeId a, std::vector<std::size_t> rows) {
  OpAttrs attrs;
  attrs.rows = std::move(rows);
  return apply1(OpKind::RowMaskSelect, a, attrs);
}

NodeId Graph::conv1d(NodeId x, NodeId weight, NodeId bias, std::size_t stride,
                     std::size_t padding) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  const std::array<NodeId, 3> ids{x, weight, bias};
  return apply(OpKind::Conv1d, ids, attrs);
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  OpAttrs attrs;
  attrs.eps = eps;
  const std::array<NodeId, 3> ids{x, gamma, beta};
  return apply(OpKind::LayerNorm, ids, attrs);
}

NodeId Graph::ctc_loss(NodeId log_probs, std::vector<std::size_t> target, std::size_t blank) {
  OpAttrs attrs;
  attrs.target = std::move(target);
  attrs.blank = blank;
  return apply1(OpKind::CtcLoss, log_probs, attrs);
}

void Graph::check_id(NodeId id) const {
  SUTA_REQUIRE(id < nodes_.size(), "graph: unknown node id " + std::to_string(id));
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  return nodes_[id].value;
}

bool Graph::requires_grad(NodeId id) const {
  check_id(id);
  return nodes_[id].requires_grad;
}

OpKind Graph::kind(NodeId id) const {
  check_id(id);
  return nodes_[id].kind;
}

std::span<const NodeId> Graph::inputs(NodeId id) const {
  check_id(id);
  return nodes_[id].inputs;
}

NodeId Graph::apply(OpKind kind, std::span<const NodeId> inputs, const OpAttrs& attrs) {
  SUTA_REQUIRE(kind != OpKind::Leaf, "graph: use input() to create leaves");
  for (NodeId id : inputs) check_id(id);

  const std::size_t arity = [&] {
    switch (kind) {
      case OpKind::MatMul:
      case OpKind::Add:
      case OpKind::Multiply:
      case OpKind::ConcatRows: return std::size_t{2};
      case OpKind::Conv1d:
      case OpKind::LayerNorm: return std::size_t{3};
      default: return std::size_t{1};
    }
  }();
  SUTA_REQUIRE(inputs.size() == arity, std::string(op_name(kind)) + ": expected " +
                                           std::to_string(arity) + " inputs");

  Node node;
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  node.attrs = attrs;
  for (NodeId id : inputs) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;

  const Tensor& a = nodes_[inputs[0]].value;
  const std::string name = op_name(kind);
  Tensor& out = node.value;

  switch (kind) {
    case OpKind::Leaf: break;
    case OpKind::MatMul: {
      const Tensor& b = nodes_[inputs[1]].value;
      SUTA_REQUIRE(a.cols == b.rows, "matmul: inner dimensions differ (" + a.shape_string() +
                                         " * " + b.shape_string() + ")");
      out = matmul_values(a, b);
      break;
    }
    case OpKind::Add:
    case OpKind::Multiply: {
      const Tensor& b = nodes_[inputs[1]].value;
      SUTA_REQUIRE(broadcastable(a, b),
                   name + ": shapes " + a.shape_string() + " and " + b.shape_string() +
                       " do not broadcast");
      out = Tensor(a.rows, a.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) {
          const double bv = b.values[bcast_index(b, r, c)];
          out(r, c) = kind == OpKind::Add ? a(r, c) + bv : a(r, c) * bv;
        }
      }
      break;
    }
    case OpKind::Scale:
      out = a;
      for (double& v : out.values) v *= attrs.scalar;
      break;
    case OpKind::Negate:
      out = a;
      for (double& v : out.values) v = -v;
      break;
    case OpKind::Exp:
      out = a;
      for (double& v : out.values) v = std::exp(v);
      break;
    case OpKind::Log:
      SUTA_REQUIRE(attrs.floor > 0.0, "log: clamp floor must be positive");
      out = a;
      for (double& v : out.values) v = std::log(std::max(v, attrs.floor));
      break;
    case OpKind::Relu:
      out = a;
      for (double& v : out.values) v = std::max(v, 0.0);
      break;
    case OpKind::Gelu:
      out = a;
      for (double& v : out.values) v = gelu_value(v);
      break;
    case OpKind::RowMean:
    case OpKind::RowVariance: {
      SUTA_REQUIRE(a.cols >= 1, name + ": needs at least one column");
      out = Tensor(a.rows, 1);
      node.aux.resize(a.rows);
      for (std::size_t r = 0; r < a.rows; ++r) {
        double mu = 0.0;
        for (double v : a.row(r)) mu += v;
        mu /= static_cast<double>(a.cols);
        node.aux[r] = mu;
        if (kind == OpKind::RowMean) {
          out(r, 0) = mu;
        } else {
          double var = 0.0;
          for (double v : a.row(r)) var += (v - mu) * (v - mu);
          out(r, 0) = var / static_cast<double>(a.cols);
        }
      }
      break;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      double acc = 0.0;
      for (double v : a.values) acc += v;
      if (kind == OpKind::Mean) {
        SUTA_REQUIRE(a.size() > 0, "mean: empty tensor");
        acc /= static_cast<double>(a.size());
      }
      out = Tensor::scalar(acc);
      break;
    }
    case OpKind::Transpose:
      out = Tensor(a.cols, a.rows);
      for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
      break;
    case OpKind::RowMaskSelect:
      out = Tensor(attrs.rows.size(), a.cols);
      for (std::size_t i = 0; i < attrs.rows.size(); ++i) {
        SUTA_REQUIRE(attrs.rows[i] < a.rows, "row_mask_select: row index out of range");
        std::copy_n(a.row(attrs.rows[i]).begin(), a.cols, out.row(i).begin());
      }
      break;
    case OpKind::ConcatRows: {
      const Tensor& b = nodes_[inputs[1]].value;
      SUTA_REQUIRE(a.cols == b.cols, "concat_rows: column counts differ");
      out = Tensor(a.rows + b.rows, a.cols);
      std::copy(a.values.begin(), a.values.end(), out.values.begin());
      std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.size());
      break;
    }
    case OpKind::Conv1d: {
      const Tensor& w = nodes_[inputs[1]].value;
      const Tensor& bias = nodes_[inputs[2]].value;
      SUTA_REQUIRE(a.cols >= 1 && w.rows % a.cols == 0 && w.rows >= a.cols,
                   "conv1d: weight rows must be kernel * input channels");
      SUTA_REQUIRE(bias.rows == 1 && bias.cols == w.cols, "conv1d: bias must be 1 x out channels");
      const std::size_t kernel = w.rows / a.cols;
      const std::size_t len = conv1d_output_length(a.rows, kernel, attrs.stride, attrs.padding);
      out = Tensor(len, w.cols);
      for (std::size_t l = 0; l < len; ++l) {
        double* orow = out.values.data() + l * out.cols;
        std::copy(bias.values.begin(), bias.values.end(), orow);
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::size_t pos = l * attrs.stride + k;
          if (pos < attrs.padding || pos - attrs.padding >= a.rows) continue;
          const std::size_t t = pos - attrs.padding;
          for (std::size_t c = 0; c < a.cols; ++c) {
            const double xv = a(t, c);
            const double* wrow = w.values.data() + (k * a.cols + c) * w.cols;
            for (std::size_t o = 0; o < w.cols; ++o) orow[o] += xv * wrow[o];
          }
        }
      }
      break;
    }
    case OpKind::LayerNorm: {
      const Tensor& gamma = nodes_[inputs[1]].value;
      const Tensor& beta = nodes_[inputs[2]].value;
      SUTA_REQUIRE(a.cols >= 1, "layer_norm: D must be >= 1");
      SUTA_REQUIRE(attrs.eps > 0.0, "layer_norm: eps must be positive");
      SUTA_REQUIRE(gamma.rows == 1 && gamma.cols == a.cols && beta.same_shape(gamma),
                   "layer_norm: gamma/beta must be 1 x D");
      out = Tensor(a.rows, a.cols);
      node.cache = Tensor(a.rows, a.cols);
      node.aux.resize(a.rows);
      const double d = static_cast<double>(a.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        double mu = 0.0;
        for (double v : a.row(r)) mu += v;
        mu /= d;
        double var = 0.0;
        for (double v : a.row(r)) var += (v - mu) * (v - mu);
        var /= d;
        const double inv_std = 1.0 / std::sqrt(var + attrs.eps);
        node.aux[r] = inv_std;
        for (std::size_t c = 0; c < a.cols; ++c) {
          const double xhat = (a(r, c) - mu) * inv_std;
          node.cache(r, c) = xhat;
          out(r, c) = gamma.values[c] * xhat + beta.values[c];
        }
      }
      break;
    }
    case OpKind::SoftmaxRows:
    case OpKind::LogSoftmaxRows: {
      SUTA_REQUIRE(a.cols >= 1, name + ": needs at least one column");
      out = Tensor(a.rows, a.cols);
      node.cache = Tensor(a.rows, a.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        const auto row = a.row(r);
        const double hi = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - hi);
        const double lse = hi + std::log(z);
        for (std::size_t c = 0; c < a.cols; ++c) {
          const double p = std::exp(row[c] - lse);
          node.cache(r, c) = p;
          out(r, c) = kind == OpKind::SoftmaxRows ? p : row[c] - lse;
        }
      }
      break;
    }
    case OpKind::CtcLoss: {
      SUTA_REQUIRE(attrs.blank < a.cols, "ctc_loss: blank index out of range");
      SUTA_REQUIRE(a.rows >= 1, "ctc_loss: needs at least one frame");
      for (std::size_t tok : attrs.target) {
        SUTA_REQUIRE(tok < a.cols && tok != attrs.blank, "ctc_loss: invalid target token");
      }
      const std::size_t needed = attrs.target.size() + ctc_repeats(attrs.target);
      if (a.rows < needed) {
        throw DataError("ctc_loss: target of length " + std::to_string(attrs.target.size()) +
                        " needs at least " + std::to_string(needed) + " frames, got " +
                        std::to_string(a.rows));
      }
      out = Tensor::scalar(ctc_forward_backward(a, attrs.target, attrs.blank, node.cache));
      break;
    }
  }

  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Graph::backprop_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads,
                          std::vector<bool>& has_grad) const {
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
  auto slot = [&](std::size_t i) -> Tensor& {
    const NodeId id = node.inputs[i];
    if (!has_grad[id]) {
      grads[id] = Tensor(nodes_[id].value.rows, nodes_[id].value.cols);
      has_grad[id] = true;
    }
    return grads[id];
  };
  const Tensor& a = nodes_[node.inputs[0]].value;

  switch (node.kind) {
    case OpKind::Leaf: break;
    case OpKind::MatMul: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      if (wants(0)) {
        const Tensor ga = matmul_nt(g, b);
        Tensor& dst = slot(0);
        for (std::size_t i = 0; i < ga.size(); ++i) dst.values[i] += ga.values[i];
      }
      if (wants(1)) {
        const Tensor gb = matmul_tn(a, g);
        Tensor& dst = slot(1);
        for (std::size_t i = 0; i < gb.size(); ++i) dst.values[i] += gb.values[i];
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Multiply: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      const bool mul = node.kind == OpKind::Multiply;
      if (wants(0)) {
        Tensor& dst = slot(0);
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c)
            dst(r, c) += mul ? g(r, c) * b.values[bcast_index(b, r, c)] : g(r, c);
      }
      if (wants(1)) {
        Tensor& dst = slot(1);
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c)
            dst.values[bcast_index(b, r, c)] += mul ? g(r, c) * a(r, c) : g(r, c);
      }
      break;
    }
    case OpKind::Scale: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] += node.attrs.scalar * g.values[i];
      break;
    }
    case OpKind::Negate: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] -= g.values[i];
      break;
    }
    case OpKind::Exp: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] += g.values[i] * node.value.values[i];
      break;
    }
    case OpKind::Log: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a.values[i];
        if (x > node.attrs.floor) dst.values[i] += g.values[i] / x;
      }
      break;
    }
    case OpKind::Relu: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.values[i] > 0.0) dst.values[i] += g.values[i];
      break;
    }
    case OpKind::Gelu: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] += g.values[i] * gelu_grad(a.values[i]);
      break;
    }
    case OpKind::RowMean: {
      Tensor& dst = slot(0);
      const double inv = 1.0 / static_cast<double>(a.cols);
      for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) dst(r, c) += g(r, 0) * inv;
      break;
    }
    case OpKind::RowVariance: {
      Tensor& dst = slot(0);
      const double k = 2.0 / static_cast<double>(a.cols);
      for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) dst(r, c) += g(r, 0) * k * (a(r, c) - node.aux[r]);
      break;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      Tensor& dst = slot(0);
      const double k = node.kind == OpKind::Mean ? g.item() / static_cast<double>(a.size()) : g.item();
      for (double& v : dst.values) v += k;
      break;
    }
    case OpKind::Transpose: {
      Tensor& dst = slot(0);
      for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) dst(r, c) += g(c, r);
      break;
    }
    case OpKind::RowMaskSelect: {
      Tensor& dst = slot(0);
      for (std::size_t i = 0; i < node.attrs.rows.size(); ++i) {
        auto drow = dst.row(node.attrs.rows[i]);
        const auto grow = g.row(i);
        for (std::size_t c = 0; c < a.cols; ++c) drow[c] += grow[c];
      }
      break;
    }
    case OpKind::ConcatRows: {
      if (wants(0)) {
        Tensor& dst = slot(0);
        for (std::size_t i = 0; i < a.size(); ++i) dst.values[i] += g.values[i];
      }
      if (wants(1)) {
        Tensor& dst = slot(1);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.values[i] += g.values[a.size() + i];
      }
      break;
    }
    case OpKind::Conv1d: {
      const Tensor& w = nodes_[node.inputs[1]].value;
      const std::size_t kernel = w.rows / a.cols;
      const std::size_t stride = node.attrs.stride;
      const std::size_t pad = node.attrs.padding;
      Tensor* gx = wants(0) ? &slot(0) : nullptr;
      Tensor* gw = wants(1) ? &slot(1) : nullptr;
      if (wants(2)) {
        Tensor& gb = slot(2);
        for (std::size_t l = 0; l < g.rows; ++l)
          for (std::size_t o = 0; o < g.cols; ++o) gb.values[o] += g(l, o);
      }
      if (!gx && !gw) break;
      for (std::size_t l = 0; l < g.rows; ++l) {
        const double* grow = g.values.data() + l * g.cols;
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::size_t pos = l * stride + k;
          if (pos < pad || pos - pad >= a.rows) continue;
          const std::size_t t = pos - pad;
          for (std::size_t c = 0; c < a.cols; ++c) {
            const std::size_t wr = k * a.cols + c;
            const double* wrow = w.values.data() + wr * w.cols;
            if (gx) {
              double acc = 0.0;
              for (std::size_t o = 0; o < w.cols; ++o) acc += grow[o] * wrow[o];
              (*gx)(t, c) += acc;
            }
            if (gw) {
              const double xv = a(t, c);
              double* gwrow = gw->values.data() + wr * w.cols;
              for (std::size_t o = 0; o < w.cols; ++o) gwrow[o] += xv * grow[o];
            }
          }
        }
      }
      break;
    }
    case OpKind::LayerNorm: {
      const Tensor& gamma = nodes_[node.inputs[1]].value;
      const Tensor& xhat = node.cache;
      if (wants(1)) {
        Tensor& dg = slot(1);
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c) dg.values[c] += g(r, c) * xhat(r, c);
      }
      if (wants(2)) {
        Tensor& db = slot(2);
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c) db.values[c] += g(r, c);
      }
      if (wants(0)) {
        Tensor& dx = slot(0);
        const double d = static_cast<double>(a.cols);
        for (std::size_t r = 0; r < a.rows; ++r) {
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < a.cols; ++c) {
            const double dxh = g(r, c) * gamma.values[c];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat(r, c);
          }
          mean_dxhat /= d;
          mean_dxhat_xhat /= d;
          for (std::size_t c = 0; c < a.cols; ++c) {
            const double dxh = g(r, c) * gamma.values[c];
            dx(r, c) += node.aux[r] * (dxh - mean_dxhat - xhat(r, c) * mean_dxhat_xhat);
          }
        }
      }
      break;
    }
    case OpKind::SoftmaxRows: {
      Tensor& dst = slot(0);
      const Tensor& p = node.cache;
      for (std::size_t r = 0; r < a.rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) dot += g(r, c) * p(r, c);
        for (std::size_t c = 0; c < a.cols; ++c) dst(r, c) += p(r, c) * (g(r, c) - dot);
      }
      break;
    }
    case OpKind::LogSoftmaxRows: {
      Tensor& dst = slot(0);
      const Tensor& p = node.cache;
      for (std::size_t r = 0; r < a.rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) total += g(r, c);
        for (std::size_t c = 0; c < a.cols; ++c) dst(r, c) += g(r, c) - p(r, c) * total;
      }
      break;
    }
    case OpKind::CtcLoss: {
      Tensor& dst = slot(0);
      const double k = g.item();
      for (std::size_t i = 0; i < dst.size(); ++i) dst.values[i] += k * node.cache.values[i];
      break;
    }
  }
}

GradientMap Graph::backward(NodeId loss) const {
  check_id(loss);
  SUTA_REQUIRE(nodes_[loss].value.rows == 1 && nodes_[loss].value.cols == 1,
               "backward: loss node must be 1x1, got " + nodes_[loss].value.shape_string());
  GradientMap result;
  std::vector<Tensor> grads(loss + 1);
  std::vector<bool> has_grad(loss + 1, false);
  // A constant loss still reports (zero) gradients for every trainable leaf.
  if (nodes_[loss].requires_grad) {
    grads[loss] = Tensor::scalar(1.0);
    has_grad[loss] = true;
  }

  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || node.kind == OpKind::Leaf || !has_grad[id]) continue;
    backprop_node(node, grads[id], grads, has_grad);
    // Interior gradients are dead once propagated.
    grads[id] = Tensor();
  }

  for (NodeId id = 0; id <= loss; ++id) {
    const Node& node = nodes_[id];
    if (node.kind != OpKind::Leaf || !node.requires_grad) continue;
    result.emplace(id, has_grad[id] ? std::move(grads[id])
                                    : Tensor(node.value.rows, node.value.cols));
  }
  return result;
}

}  // namespace suta::grad
