#pragma once

// Synthetic utterances: each character is rendered as an onset frame followed
// by sustain frames, drawn from fixed per-character prototype vectors plus
// Gaussian jitter. Covariate shift is additive Gaussian noise on the features.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suta/tensor.hpp"
#include "suta/vocab.hpp"

namespace suta {

struct Utterance {
  std::string id;
  Tensor features;  // T_in x D_in
  Transcript transcript;
  std::string domain_tag;

  std::size_t duration_frames() const noexcept { return features.rows; }
  bool operator==(const Utterance&) const = default;
};

using Corpus = std::vector<Utterance>;

struct CorpusSpec {
  std::size_t count = 50;
  std::size_t min_words = 1;
  std::size_t max_words = 6;
  std::size_t min_word_chars = 2;
  std::size_t max_word_chars = 6;
  double apostrophe_rate = 0.05;
  std::size_t min_frames_per_char = 2;
  std::size_t max_frames_per_char = 4;
  double template_jitter = 0.3;
  std::size_t active_bands = 4;
  double min_amplitude = 1.5;
  double max_amplitude = 2.5;
  bool random_polarity = false;
  double channel_gain = 0.0;
  double channel_offset = 0.0;
  double delta = 0.0;
  std::size_t feature_dim = 16;
  // Prototypes are a property of the "language" and must be shared by every
  // corpus a model is trained or tested on; `seed` drives everything else.
  std::uint64_t prototype_seed = 1;
  std::uint64_t seed = 0;
  std::string id_prefix = "utt";
  std::string domain_tag = "clean";
};

void validate(const CorpusSpec& spec);

// Deterministic given the spec. When spec.delta > 0 noise is injected with
// add_gaussian_noise(corpus, delta, seed).
Corpus generate_corpus(const CorpusSpec& spec);

// features + delta * N(0, 1) per entry. Transcript and frame count unchanged;
// the domain tag gains a "+delta=<value>" suffix.
Utterance add_gaussian_noise(const Utterance& utterance, double delta, std::uint64_t seed);

// Applies add_gaussian_noise to every utterance with a per-utterance seed
// derived from `seed` and the utterance id.
Corpus add_gaussian_noise(const Corpus& corpus, double delta, std::uint64_t seed);

// 64-bit FNV-1a, used wherever a portable string hash feeds a seed.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Binary corpus container, little-endian, version header. save_corpus also
// writes "<path>.txt" with one "id<TAB>transcript" line per utterance.
inline constexpr std::uint32_t kCorpusFormatVersion = 1;
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace suta
