#pragma once

// Unsupervised test-time objectives over a single utterance's CTC outputs,
// and the CTC loss used for supervised and pseudo-label training.
//
// Each loss has two entry points: a graph form that appends differentiable
// nodes to an existing Graph (used by training and adaptation), and a value
// form over plain tensors for evaluation and tests.

#include <cstddef>
#include <vector>

#include "suta/graph.hpp"
#include "suta/tensor.hpp"
#include "suta/vocab.hpp"

namespace suta::losses {

// L x C frame posteriors after temperature smoothing. Rows sum to one.
struct ProbMatrix {
  Tensor values;
  double temperature = 1.0;
};

// keep[i] is false iff the blank class is the argmax of frame i.
struct FrameMask {
  std::vector<bool> keep;

  std::size_t retained() const;
  std::vector<std::size_t> kept_rows() const;
};

// How the entropy term is averaged. Retained divides by the number of kept
// frames; AllFrames divides by L regardless of exclusion.
enum class EntropyNorm { Retained, AllFrames };

struct SutaLossConfig {
  double alpha = 0.3;
  double temperature = 2.5;
  std::size_t blank = vocab::kBlank;
  EntropyNorm entropy_norm = EntropyNorm::Retained;
};

void validate(const SutaLossConfig& config);

// ---- graph form ----

grad::NodeId softmax_temperature(grad::Graph& g, grad::NodeId logits, double temperature);
grad::NodeId entropy_loss(grad::Graph& g, grad::NodeId probs, const FrameMask& mask,
                          EntropyNorm norm = EntropyNorm::Retained);
grad::NodeId mcc_loss(grad::Graph& g, grad::NodeId probs);

struct CombinedNodes {
  grad::NodeId total;
  grad::NodeId entropy;
  grad::NodeId mcc;
  grad::NodeId probs;
  std::size_t retained_frames;
  std::size_t frames;
};

// Smooths once, then builds alpha * L_em + (1 - alpha) * L_mcc on the same P.
CombinedNodes combined_loss(grad::Graph& g, grad::NodeId logits, const SutaLossConfig& config);

// `log_probs` must already be log-normalized per frame (e.g. log_softmax_rows).
grad::NodeId ctc_loss(grad::Graph& g, grad::NodeId log_probs,
                      const std::vector<std::size_t>& target, std::size_t blank = vocab::kBlank);

// ---- value form ----

ProbMatrix softmax_temperature(const Tensor& logits, double temperature);
FrameMask blank_mask(const ProbMatrix& probs, std::size_t blank = vocab::kBlank);
FrameMask blank_mask(const Tensor& scores, std::size_t blank = vocab::kBlank);
double entropy_loss(const ProbMatrix& probs, const FrameMask& mask,
                    EntropyNorm norm = EntropyNorm::Retained);
double mcc_loss(const ProbMatrix& probs);

struct CombinedValue {
  double total = 0.0;
  double entropy = 0.0;
  double mcc = 0.0;
  std::size_t retained_frames = 0;
  std::size_t frames = 0;
};

CombinedValue combined_loss(const Tensor& logits, const SutaLossConfig& config);

double ctc_loss(const Tensor& log_probs, const std::vector<std::size_t>& target,
                std::size_t blank = vocab::kBlank);

}  // namespace suta::losses
