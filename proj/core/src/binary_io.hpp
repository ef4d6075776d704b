#pragma once

// Little-endian framing shared by the bank and fusion-network formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "fshal/error.hpp"

namespace fshal::detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

class ByteWriter {
 public:
  void magic(const std::array<char, 4>& m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    v = to_le(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + 4);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void floats(const float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f32(data[i]);
  }

  void flush_to(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : buf_(std::move(bytes)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void expect_magic(const std::array<char, 4>& m) {
    if (buf_.size() < 4 || std::memcmp(buf_.data(), m.data(), 4) != 0) {
      throw Error(ErrorCode::unrecognized_format,
                  "expected magic '" + std::string(m.begin(), m.end()) + "'");
    }
    pos_ = 4;
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + pos_, 4);
    pos_ += 4;
    return to_le(v);
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* out, std::size_t n, const char* what) {
    need(n * 4, what);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v;
      std::memcpy(&v, buf_.data() + pos_, 4);
      pos_ += 4;
      out[i] = std::bit_cast<float>(to_le(v));
    }
  }

  // Checked before allocating buffers sized by header counts.
  void require(std::size_t n, const char* what) const { need(n, what); }

  void expect_end() const {
    if (!at_end()) {
      throw Error(ErrorCode::unrecognized_format,
                  std::to_string(buf_.size() - pos_) + " trailing bytes at offset " + std::to_string(pos_));
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) {
      throw Error(ErrorCode::truncated_payload, std::string("reading ") + what + " at offset " +
                                                     std::to_string(pos_) + " (need " + std::to_string(n) +
                                                     " bytes, have " + std::to_string(buf_.size() - pos_) + ")");
    }
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fshal::detail
