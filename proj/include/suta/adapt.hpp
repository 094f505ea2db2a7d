#pragma once

// Single-utterance episodic test-time adaptation.
//
// Every call starts from a private copy of the source model with fresh
// optimizer state, runs N AdamW steps on one utterance, and decodes the
// adapted copy. The source model is never written.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "suta/corpus.hpp"
#include "suta/eval.hpp"
#include "suta/losses.hpp"
#include "suta/model.hpp"
#include "suta/optim.hpp"

namespace suta {

enum class Method { None, Suta, Sdpl };

const char* to_string(Method method);
Method parse_method(std::string_view text);

// Best learning rate per parameter selection for the reference setup:
// LN 2e-4, LN+Feat 2e-5, All 1e-6; Feat shares the LN+Feat rate.
double default_learning_rate(Selection selection);

struct AdaptConfig {
  Method method = Method::Suta;
  double alpha = 0.3;
  double temperature = 2.5;
  std::size_t iterations = 10;
  Selection selection = Selection::LnFeat;
  // Unset: default_learning_rate(selection).
  std::optional<double> learning_rate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  losses::EntropyNorm entropy_norm = losses::EntropyNorm::Retained;
  // Pseudo-labeling is only run on layer-norm parameters unless this is set.
  bool allow_any_sdpl_selection = false;
  std::uint64_t seed = 0;

  double effective_learning_rate() const;
  AdamWConfig optimizer() const;
  losses::SutaLossConfig loss() const;
};

void validate(const AdaptConfig& config);

// Model state after `iteration` updates (index 0 is the unadapted model).
struct TraceRecord {
  std::size_t iteration = 0;
  double entropy = 0.0;
  double mcc = 0.0;
  double total = 0.0;
  std::size_t retained_frames = 0;
  std::size_t frames = 0;
  // CTC loss against the greedy pseudo label (pseudo-labeling only).
  std::optional<double> pseudo_label_loss;
  // True when this iteration's update was skipped (empty pseudo label).
  bool update_skipped = false;
  Transcript hypothesis;
  std::optional<WerReport> wer;
};

struct AdaptTrace {
  std::vector<TraceRecord> records;  // iterations + 1 entries
};

struct AdaptOutcome {
  Transcript hypothesis;
  AdaptTrace trace;
  ModelState adapted;
};

AdaptOutcome suta_adapt(const ModelState& source, const Utterance& utterance,
                        const AdaptConfig& config);
AdaptOutcome sdpl_adapt(const ModelState& source, const Utterance& utterance,
                        const AdaptConfig& config);
// Dispatches on config.method; Method::None decodes the source model as is.
AdaptOutcome adapt(const ModelState& source, const Utterance& utterance, const AdaptConfig& config);

}  // namespace suta
