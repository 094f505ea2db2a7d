#include "suta/corpus.hpp"

#include <charconv>
#include <cmath>
#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "suta/binary_io.hpp"
#include "suta/errors.hpp"

namespace suta {
namespace {

constexpr char kMagic[] = "SUTACORP";
constexpr std::size_t kMagicLen = 8;

// One onset and one sustain band-energy envelope per non-blank symbol. Each
// envelope lights `active_bands` of the feature dimensions; silence is all zero.
struct Prototypes {
  std::vector<Tensor> onset;
  std::vector<Tensor> sustain;
  Tensor silence;
};

Prototypes make_prototypes(const CorpusSpec& spec) {
  const std::size_t dim = spec.feature_dim;
  std::mt19937_64 rng(spec.prototype_seed);
  std::uniform_real_distribution<double> amplitude(spec.min_amplitude, spec.max_amplitude);
  std::vector<std::size_t> bands(dim);
  auto draw = [&] {
    std::iota(bands.begin(), bands.end(), 0);
    std::shuffle(bands.begin(), bands.end(), rng);
    Tensor t(1, dim);
    for (std::size_t i = 0; i < std::min(spec.active_bands, dim); ++i) t.values[bands[i]] = amplitude(rng);
    return t;
  };
  Prototypes p;
  p.silence = Tensor(1, dim);
  for (std::size_t tok = 0; tok < vocab::kSize; ++tok) {
    p.onset.push_back(tok == vocab::kBlank ? Tensor(1, dim) : draw());
    p.sustain.push_back(tok == vocab::kBlank ? Tensor(1, dim) : draw());
  }
  return p;
}

std::string format_delta(double delta) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), delta);
  return std::string(buf, res.ptr);
}

}  // namespace

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate(const CorpusSpec& spec) {
  SUTA_REQUIRE(spec.count >= 1, "corpus: count must be >= 1");
  SUTA_REQUIRE(spec.min_words >= 1 && spec.min_words <= spec.max_words,
               "corpus: word range must satisfy 1 <= min <= max");
  SUTA_REQUIRE(spec.min_word_chars >= 1 && spec.min_word_chars <= spec.max_word_chars,
               "corpus: word length range must satisfy 1 <= min <= max");
  SUTA_REQUIRE(spec.min_frames_per_char >= 2 && spec.min_frames_per_char <= spec.max_frames_per_char,
               "corpus: frames per character must satisfy 2 <= min <= max");
  SUTA_REQUIRE(spec.template_jitter >= 0.0 && spec.delta >= 0.0,
               "corpus: jitter and delta must be nonnegative");
  SUTA_REQUIRE(spec.apostrophe_rate >= 0.0 && spec.apostrophe_rate <= 1.0,
               "corpus: apostrophe rate must lie in [0, 1]");
  SUTA_REQUIRE(spec.feature_dim >= 1, "corpus: feature_dim must be >= 1");
}

Corpus generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  const Prototypes protos = make_prototypes(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::bernoulli_distribution apostrophe(spec.apostrophe_rate);
  std::bernoulli_distribution coin(0.5);

  Corpus corpus;
  corpus.reserve(spec.count);
  for (std::size_t n = 0; n < spec.count; ++n) {
    Transcript transcript;
    const std::size_t words = uniform(spec.min_words, spec.max_words);
    for (std::size_t w = 0; w < words; ++w) {
      std::string word;
      const std::size_t chars = uniform(spec.min_word_chars, spec.max_word_chars);
      for (std::size_t c = 0; c < chars; ++c) word.push_back(static_cast<char>('A' + uniform(0, 25)));
      if (word.size() >= 2 && apostrophe(rng)) word.insert(word.end() - 1, '\'');
      transcript.words.push_back(std::move(word));
    }

    std::vector<const Tensor*> frames;
    auto silence = [&] {
      const std::size_t k = uniform(1, 3);
      for (std::size_t i = 0; i < k; ++i) frames.push_back(&protos.silence);
    };
    silence();
    for (std::size_t tok : encode(transcript)) {
      const std::size_t len = uniform(spec.min_frames_per_char, spec.max_frames_per_char);
      frames.push_back(&protos.onset[tok]);
      for (std::size_t i = 1; i < len; ++i) frames.push_back(&protos.sustain[tok]);
    }
    silence();

    Utterance utt;
    utt.id = spec.id_prefix + "-" + std::to_string(n);
    utt.transcript = std::move(transcript);
    utt.domain_tag = spec.domain_tag;
    // Per-utterance channel: a band-wise gain and offset shared by all frames.
    std::vector<double> gain(spec.feature_dim, 1.0);
    std::vector<double> offset(spec.feature_dim, 0.0);
    for (std::size_t d = 0; d < spec.feature_dim; ++d) {
      gain[d] = std::exp(spec.channel_gain * jitter(rng));
      offset[d] = spec.channel_offset * jitter(rng);
    }
    utt.features = Tensor(frames.size(), spec.feature_dim);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      // Random polarity per frame: the envelope fixes magnitude, not sign.
      const double sign = spec.random_polarity && coin(rng) ? -1.0 : 1.0;
      for (std::size_t d = 0; d < spec.feature_dim; ++d) {
        const double clean = sign * frames[t]->values[d] + spec.template_jitter * jitter(rng);
        utt.features(t, d) = gain[d] * clean + offset[d];
      }
    }
    corpus.push_back(std::move(utt));
  }

  if (spec.delta > 0.0) return add_gaussian_noise(corpus, spec.delta, spec.seed);
  return corpus;
}

Utterance add_gaussian_noise(const Utterance& utterance, double delta, std::uint64_t seed) {
  SUTA_REQUIRE(delta >= 0.0, "add_gaussian_noise: delta must be nonnegative");
  Utterance out = utterance;
  if (delta == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.features.values) v += delta * normal(rng);
  out.domain_tag += "+delta=" + format_delta(delta);
  return out;
}

Corpus add_gaussian_noise(const Corpus& corpus, double delta, std::uint64_t seed) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& utt : corpus) out.push_back(add_gaussian_noise(utt, delta, fnv1a(utt.id, seed)));
  return out;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::string bytes(kMagic, kMagicLen);
  io::put_u32(bytes, kCorpusFormatVersion);
  io::put_u64(bytes, corpus.size());
  std::string sidecar;
  for (const auto& utt : corpus) {
    io::put_str(bytes, utt.id);
    io::put_str(bytes, utt.domain_tag);
    io::put_str(bytes, utt.transcript.text());
    io::put_u64(bytes, utt.features.rows);
    io::put_u64(bytes, utt.features.cols);
    for (double v : utt.features.values) io::put_f64(bytes, v);
    sidecar += utt.id + "\t" + utt.transcript.text() + "\n";
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream txt(path.string() + ".txt", std::ios::trunc);
  txt << sidecar;
  if (!out || !txt) throw DataError("failed writing corpus '" + path.string() + "'");
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("corpus file '" + path.string() + "' not found");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  io::Reader reader(bytes);
  if (reader.raw(kMagicLen, "header") != std::string(kMagic, kMagicLen))
    throw FormatError("not a corpus file: bad magic", "header");
  const auto version = reader.u32("header");
  if (version != kCorpusFormatVersion)
    throw FormatError("unsupported corpus version " + std::to_string(version), "header");
  const auto count = reader.u64("header");

  Corpus corpus;
  for (std::uint64_t n = 0; n < count; ++n) {
    std::string record = "#" + std::to_string(n);
    Utterance utt;
    utt.id = reader.str(record);
    record = utt.id;
    utt.domain_tag = reader.str(record);
    utt.transcript = Transcript::from_text(reader.str(record));
    const auto rows = reader.u64(record);
    const auto cols = reader.u64(record);
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 16))
      throw FormatError("implausible feature shape", record);
    reader.need(rows * cols * 8, record);
    utt.features = Tensor(rows, cols);
    for (double& v : utt.features.values) v = reader.f64(record);
    corpus.push_back(std::move(utt));
  }
  if (!reader.at_end()) throw FormatError("trailing bytes after last record", "trailer");
  return corpus;
}

}  // namespace suta
