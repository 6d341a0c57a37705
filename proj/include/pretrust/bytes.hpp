#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pretrust/common.hpp"

namespace pretrust {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline std::string to_hex(ByteView data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw DecodeError("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> fixed_from_hex(std::string_view hex) {
  auto raw = from_hex(hex);
  if (raw.size() != N) throw DecodeError("hex value has wrong length");
  std::array<std::uint8_t, N> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Canonical encoding. Every field is an 8-byte big-endian length followed by
// the field content; integers are 8-byte big-endian content; lists are a
// field holding an integer count followed by one field per element.
class Writer {
public:
  Writer& u64(std::uint64_t v) {
    put_len(8);
    put_be(v);
    return *this;
  }

  Writer& bytes(ByteView v) {
    put_len(v.size());
    out_.insert(out_.end(), v.begin(), v.end());
    return *this;
  }

  template <std::size_t N>
  Writer& bytes(const std::array<std::uint8_t, N>& v) {
    return bytes(ByteView{v.data(), v.size()});
  }

  Writer& str(std::string_view s) { return bytes(as_bytes(s)); }

  Writer& count(std::size_t n) { return u64(n); }

  const Bytes& data() const& noexcept { return out_; }
  Bytes take() && noexcept { return std::move(out_); }

private:
  void put_len(std::uint64_t n) { put_be(n); }
  void put_be(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  Bytes out_;
};

class Reader {
public:
  explicit Reader(ByteView in) : in_(in) {}

  ByteView field() {
    auto len = get_be();
    if (len > in_.size() - pos_) throw DecodeError("field length exceeds input");
    auto view = in_.subspan(pos_, static_cast<std::size_t>(len));
    pos_ += static_cast<std::size_t>(len);
    return view;
  }

  std::uint64_t u64() {
    auto f = field();
    if (f.size() != 8) throw DecodeError("integer field must be 8 bytes");
    std::uint64_t v = 0;
    for (auto b : f) v = (v << 8) | b;
    return v;
  }

  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() {
    auto f = field();
    if (f.size() != N) throw DecodeError("fixed-width field has wrong length");
    std::array<std::uint8_t, N> out{};
    std::copy(f.begin(), f.end(), out.begin());
    return out;
  }

  std::string str() {
    auto f = field();
    return {f.begin(), f.end()};
  }

  // Bounded by the remaining input so a forged count cannot drive a huge
  // allocation.
  std::size_t count() {
    auto n = u64();
    if (n > in_.size() - pos_) throw DecodeError("list count exceeds input");
    return static_cast<std::size_t>(n);
  }

  void expect_end() const {
    if (pos_ != in_.size()) throw DecodeError("trailing bytes after message");
  }

  bool at_end() const noexcept { return pos_ == in_.size(); }

private:
  std::uint64_t get_be() {
    if (in_.size() - pos_ < 8) throw DecodeError("truncated length prefix");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_ + i];
    pos_ += 8;
    return v;
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace pretrust
