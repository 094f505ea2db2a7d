#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "suta/corpus.hpp"
#include "suta/eval.hpp"
#include "suta/model.hpp"

namespace suta {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> heldout_wer;
};

struct TrainResult {
  ModelState model;
  std::vector<EpochLog> log;
};

// Minimizes mean CTC loss over `corpus` with AdamW, every parameter trainable.
// The returned model keeps the trainable flags of the input. Throws DataError
// naming the utterance for out-of-vocabulary or unalignable transcripts.
TrainResult train_source(const ModelState& model, const Corpus& corpus, const TrainConfig& config,
                         const Corpus* heldout = nullptr);

// Greedy-decode WER aggregated over the corpus (total errors / total words).
WerReport evaluate(const ModelState& model, const Corpus& corpus);

}  // namespace suta
