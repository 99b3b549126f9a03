#pragma once

// Canonical length-prefixed binary encoding.
//
// Integers are fixed-width big-endian, byte strings are a u32 length followed
// by the bytes, lists are a u32 count followed by the elements, digests are
// written as their raw 32 bytes. Readers are strict: every value that decodes
// re-encodes to exactly the bytes it came from.

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "medledger/crypto.hpp"

namespace medledger {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void boolean(bool v) { u8(v ? 1 : 0); }
  void bytes(ByteView v);
  void str(std::string_view v) { bytes(as_bytes(v)); }
  void digest(const Digest& d) { raw(d.bytes); }
  void raw(ByteView v) { out_.insert(out_.end(), v.begin(), v.end()); }

  const Bytes& data() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  bool boolean();
  Bytes bytes();
  std::string str();
  Digest digest();

  template <std::size_t N>
  std::array<std::uint8_t, N> fixed_bytes() {
    Bytes b = bytes();
    if (b.size() != N) throw DecodeError("unexpected byte-string length");
    std::array<std::uint8_t, N> out{};
    std::copy(b.begin(), b.end(), out.begin());
    return out;
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void expect_end() const;

 private:
  ByteView take(std::size_t n);

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace medledger
