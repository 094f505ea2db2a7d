#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace suta {

// Character inventory of the CTC output layer: blank, A-Z, apostrophe, space.
namespace vocab {

inline constexpr std::size_t kBlank = 0;
inline constexpr std::size_t kApostrophe = 27;
inline constexpr std::size_t kSpace = 28;
inline constexpr std::size_t kSize = 29;

// Printable characters of the non-blank classes, in class order.
inline constexpr std::string_view kSymbols = "ABCDEFGHIJKLMNOPQRSTUVWXYZ' ";

std::optional<std::size_t> token_of(char c);
char char_of(std::size_t token);

}  // namespace vocab

// Upper-case, drop everything but A-Z, apostrophe and spaces, and collapse runs
// of whitespace to single spaces.
std::string canonicalize(std::string_view text);

struct Transcript {
  std::vector<std::string> words;

  static Transcript from_text(std::string_view text);
  std::string text() const;
  bool empty() const noexcept { return words.empty(); }

  bool operator==(const Transcript&) const = default;
};

// Class ids of a transcript: characters with single spaces between words.
// Throws DataError on any symbol outside the vocabulary.
std::vector<std::size_t> encode(const Transcript& transcript);

}  // namespace suta
