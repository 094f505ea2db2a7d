#include "suta/vocab.hpp"

#include <cctype>
#include <sstream>

#include "suta/errors.hpp"

namespace suta {
namespace vocab {

std::optional<std::size_t> token_of(char c) {
  if (c >= 'A' && c <= 'Z') return static_cast<std::size_t>(c - 'A') + 1;
  if (c == '\'') return kApostrophe;
  if (c == ' ') return kSpace;
  return std::nullopt;
}

char char_of(std::size_t token) {
  SUTA_REQUIRE(token >= 1 && token < kSize, "vocab: token " + std::to_string(token) +
                                                " has no printable symbol");
  return kSymbols[token - 1];
}

}  // namespace vocab

std::string canonicalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char raw : text) {
    const auto c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (!((c >= 'A' && c <= 'Z') || c == '\'')) continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Transcript Transcript::from_text(std::string_view text) {
  Transcript t;
  std::istringstream in(canonicalize(text));
  std::string word;
  while (std::getline(in, word, ' ')) {
    if (!word.empty()) t.words.push_back(word);
  }
  return t;
}

std::string Transcript::text() const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::vector<std::size_t> encode(const Transcript& transcript) {
  std::vector<std::size_t> tokens;
  for (char c : transcript.text()) {
    const auto tok = vocab::token_of(c);
    if (!tok) throw DataError(std::string("symbol '") + c + "' is not in the vocabulary");
    tokens.push_back(*tok);
  }
  return tokens;
}

}  // namespace suta
