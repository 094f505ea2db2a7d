#include "suta/losses.hpp"

#include "suta/errors.hpp"

namespace suta::losses {

std::size_t FrameMask::retained() const {
  std::size_t n = 0;
  for (bool k : keep) n += k ? 1 : 0;
  return n;
}

std::vector<std::size_t> FrameMask::kept_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(i);
  return rows;
}

void validate(const SutaLossConfig& config) {
  SUTA_REQUIRE(config.alpha >= 0.0 && config.alpha <= 1.0, "alpha must lie in [0, 1]");
  SUTA_REQUIRE(config.temperature >= 1.0, "temperature must be >= 1");
}

grad::NodeId softmax_temperature(grad::Graph& g, grad::NodeId logits, double temperature) {
  SUTA_REQUIRE(temperature > 0.0, "softmax_temperature: T must be positive");
  return g.softmax_rows(g.scale(logits, 1.0 / temperature));
}

grad::NodeId entropy_loss(grad::Graph& g, grad::NodeId probs, const FrameMask& mask,
                          EntropyNorm norm) {
  const Tensor& p = g.value(probs);
  SUTA_REQUIRE(mask.keep.size() == p.rows, "entropy_loss: mask length differs from frame count");
  const auto rows = mask.kept_rows();
  if (rows.empty()) return g.input(Tensor::scalar(0.0));
  const auto kept = g.row_select(probs, rows);
  const auto plogp = g.multiply(kept, g.log(kept));
  const double denom = static_cast<double>(norm == EntropyNorm::Retained ? rows.size() : p.rows);
  return g.scale(g.sum(plogp), -1.0 / denom);
}

grad::NodeId mcc_loss(grad::Graph& g, grad::NodeId probs) {
  const std::size_t classes = g.value(probs).cols;
  const auto gram = g.matmul(g.transpose(probs), probs);
  Tensor off_diagonal(classes, classes, 1.0);
  for (std::size_t j = 0; j < classes; ++j) off_diagonal(j, j) = 0.0;
  return g.sum(g.multiply(gram, g.input(std::move(off_diagonal))));
}

CombinedNodes combined_loss(grad::Graph& g, grad::NodeId logits, const SutaLossConfig& config) {
  validate(config);
  const auto probs = softmax_temperature(g, logits, config.temperature);
  // The mask is a constant of the step: no gradient flows through the argmax.
  const FrameMask mask = blank_mask(g.value(probs), config.blank);
  const auto em = entropy_loss(g, probs, mask, config.entropy_norm);
  const auto mcc = mcc_loss(g, probs);
  const auto total = g.add(g.scale(em, config.alpha), g.scale(mcc, 1.0 - config.alpha));
  return {total, em, mcc, probs, mask.retained(), mask.keep.size()};
}

grad::NodeId ctc_loss(grad::Graph& g, grad::NodeId log_probs,
                      const std::vector<std::size_t>& target, std::size_t blank) {
  return g.ctc_loss(log_probs, target, blank);
}

ProbMatrix softmax_temperature(const Tensor& logits, double temperature) {
  grad::Graph g;
  const auto p = softmax_temperature(g, g.input(logits), temperature);
  return {g.value(p), temperature};
}

FrameMask blank_mask(const Tensor& scores, std::size_t blank) {
  SUTA_REQUIRE(blank < scores.cols, "blank_mask: blank index out of range");
  FrameMask mask;
  mask.keep.resize(scores.rows);
  for (std::size_t i = 0; i < scores.rows; ++i) mask.keep[i] = argmax(scores.row(i)) != blank;
  return mask;
}

FrameMask blank_mask(const ProbMatrix& probs, std::size_t blank) {
  return blank_mask(probs.values, blank);
}

double entropy_loss(const ProbMatrix& probs, const FrameMask& mask, EntropyNorm norm) {
  grad::Graph g;
  return g.value(entropy_loss(g, g.input(probs.values), mask, norm)).item();
}

double mcc_loss(const ProbMatrix& probs) {
  grad::Graph g;
  return g.value(mcc_loss(g, g.input(probs.values))).item();
}

CombinedValue combined_loss(const Tensor& logits, const SutaLossConfig& config) {
  grad::Graph g;
  const auto nodes = combined_loss(g, g.input(logits), config);
  return {g.value(nodes.total).item(), g.value(nodes.entropy).item(), g.value(nodes.mcc).item(),
          nodes.retained_frames, nodes.frames};
}

double ctc_loss(const Tensor& log_probs, const std::vector<std::size_t>& target,
                std::size_t blank) {
  grad::Graph g;
  return g.value(ctc_loss(g, g.input(log_probs), target, blank)).item();
}

}  // namespace suta::losses
