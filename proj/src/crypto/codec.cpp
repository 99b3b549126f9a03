#include "medledger/codec.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace medledger {

void Writer::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void Writer::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::bytes(ByteView v) {
  if (v.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("byte string too long for u32 length prefix");
  }
  u32(static_cast<std::uint32_t>(v.size()));
  raw(v);
}

ByteView Reader::take(std::size_t n) {
  if (remaining() < n) throw DecodeError("truncated input");
  ByteView out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t Reader::u8() { return take(1)[0]; }

std::uint32_t Reader::u32() {
  std::uint32_t v = 0;
  for (std::uint8_t b : take(4)) v = (v << 8) | b;
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v = 0;
  for (std::uint8_t b : take(8)) v = (v << 8) | b;
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

bool Reader::boolean() {
  std::uint8_t v = u8();
  if (v > 1) throw DecodeError("boolean out of range");
  return v == 1;
}

Bytes Reader::bytes() {
  std::uint32_t n = u32();
  ByteView v = take(n);
  return Bytes(v.begin(), v.end());
}

std::string Reader::str() {
  std::uint32_t n = u32();
  ByteView v = take(n);
  return std::string(reinterpret_cast<const char*>(v.data()), v.size());
}

Digest Reader::digest() { return Digest::from_bytes(take(Digest::kSize)); }

void Reader::expect_end() const {
  if (remaining() != 0) throw DecodeError("trailing bytes after value");
}

}  // namespace medledger
