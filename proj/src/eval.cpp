#include "suta/eval.hpp"

#include <algorithm>
#include <string>

#include "suta/errors.hpp"

namespace suta {

std::vector<std::size_t> greedy_ctc_tokens(const Tensor& logits, std::size_t blank) {
  SUTA_REQUIRE(blank < logits.cols, "greedy decode: blank index out of range");
  std::vector<std::size_t> tokens;
  std::size_t prev = blank;
  for (std::size_t t = 0; t < logits.rows; ++t) {
    const std::size_t best = argmax(logits.row(t));
    if (best != blank && best != prev) tokens.push_back(best);
    prev = best;
  }
  return tokens;
}

Transcript greedy_ctc_decode(const Tensor& logits, std::size_t blank) {
  std::string text;
  for (std::size_t tok : greedy_ctc_tokens(logits, blank)) text.push_back(vocab::char_of(tok));
  return Transcript::from_text(text);
}

double WerReport::wer() const {
  if (ref_words == 0) throw DataError("wer: no reference words");
  return static_cast<double>(errors()) / static_cast<double>(ref_words);
}

WerReport& WerReport::operator+=(const WerReport& other) {
  substitutions += other.substitutions;
  deletions += other.deletions;
  insertions += other.insertions;
  ref_words += other.ref_words;
  return *this;
}

WerReport wer(const Transcript& reference, const Transcript& hypothesis) {
  if (reference.empty()) throw DataError("wer: empty reference transcript");
  const auto& ref = reference.words;
  const auto& hyp = hypothesis.words;
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();

  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto D = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) D(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) D(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = D(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      D(i, j) = std::min({diag, D(i - 1, j) + 1, D(i, j - 1) + 1});
    }
  }

  WerReport report;
  report.ref_words = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (D(i, j) == D(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++report.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && D(i, j) == D(i - 1, j) + 1) {
      ++report.deletions;
      --i;
    } else {
      ++report.insertions;
      --j;
    }
  }
  return report;
}

double werr(double baseline_wer, double adapted_wer) {
  if (!(baseline_wer > 0.0)) throw DataError("werr: baseline WER must be positive");
  return (baseline_wer - adapted_wer) / baseline_wer;
}

}  // namespace suta
