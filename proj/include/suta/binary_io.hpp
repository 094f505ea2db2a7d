#pragma once

// Little-endian primitive encoding shared by the corpus container and the
// parameter hash. Byte order is pinned regardless of host.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "suta/errors.hpp"

namespace suta::io {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

// Cursor over an in-memory byte buffer; every read is bounds-checked.
class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void need(std::size_t n, const std::string& record) const {
    if (bytes_.size() - pos_ < n) throw FormatError("unexpected end of file", record);
  }

  std::uint64_t u64(const std::string& record) {
    need(8, record);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint32_t u32(const std::string& record) {
    need(4, record);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const std::string& record) { return std::bit_cast<double>(u64(record)); }

  std::string str(const std::string& record) {
    const std::uint32_t n = u32(record);
    need(n, record);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string raw(std::size_t n, const std::string& record) {
    need(n, record);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace suta::io
