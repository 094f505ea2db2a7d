#pragma once

#include <cstddef>
#include <vector>

#include "suta/tensor.hpp"
#include "suta/vocab.hpp"

namespace suta {

// Per-frame argmax (lowest index on ties), repeats collapsed, blanks removed.
std::vector<std::size_t> greedy_ctc_tokens(const Tensor& logits, std::size_t blank = vocab::kBlank);

// greedy_ctc_tokens mapped to text and canonicalized into words.
Transcript greedy_ctc_decode(const Tensor& logits, std::size_t blank = vocab::kBlank);

struct WerReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const noexcept { return substitutions + deletions + insertions; }
  // Fraction, not percent.
  double wer() const;

  WerReport& operator+=(const WerReport& other);
};

// Word-level Levenshtein alignment. On equal-cost backtrace paths the
// substitution (or match) move wins over deletion, and deletion over insertion.
// Throws DataError for an empty reference.
WerReport wer(const Transcript& reference, const Transcript& hypothesis);

// Relative WER reduction as a fraction: (baseline - adapted) / baseline.
// Throws DataError when baseline_wer is not positive.
double werr(double baseline_wer, double adapted_wer);

}  // namespace suta
