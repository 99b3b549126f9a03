#pragma once

// Cryptographic primitives used across the ledger: SHA-256 digests, Ed25519
// signing keys, AES-256-GCM sealing and a CSPRNG. All of it is a thin layer
// over OpenSSL libcrypto.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace medledger {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView data);
// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 32-byte SHA-256 value. Ordering is lexicographic over the bytes.
struct Digest {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> bytes{};

  static Digest zero() { return {}; }
  static Digest from_hex(std::string_view hex);
  static Digest from_bytes(ByteView data);

  std::string hex() const { return to_hex(bytes); }
  bool is_zero() const;

  auto operator<=>(const Digest&) const = default;
  bool operator==(const Digest&) const = default;
};

Digest sha256(ByteView data);
inline Digest sha256(std::string_view s) { return sha256(as_bytes(s)); }
Digest hmac_sha256(ByteView key, ByteView data);

void random_fill(std::span<std::uint8_t> out);
template <std::size_t N>
std::array<std::uint8_t, N> random_array() {
  std::array<std::uint8_t, N> out{};
  random_fill(out);
  return out;
}

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;
using Seed = std::array<std::uint8_t, 32>;

// Ed25519 signing key. Holds the 32-byte seed; the public key is derived once.
class KeyPair {
 public:
  static KeyPair generate();
  static KeyPair from_seed(const Seed& seed);

  const Seed& seed() const { return seed_; }
  const PublicKey& public_key() const { return public_key_; }
  Signature sign(ByteView message) const;

 private:
  KeyPair(const Seed& seed, const PublicKey& pk) : seed_(seed), public_key_(pk) {}

  Seed seed_;
  PublicKey public_key_;
};

bool ed25519_verify(const PublicKey& pk, ByteView message, const Signature& sig);

// Memo of successful signature checks keyed by (key, message, signature).
// Only positive results are cached, so a lookup can never turn a bad signature
// into a good one.
bool ed25519_verify_cached(const PublicKey& pk, ByteView message, const Signature& sig);

namespace aead {

constexpr std::size_t kKeySize = 32;
constexpr std::size_t kNonceSize = 12;
constexpr std::size_t kTagSize = 16;

using Key = std::array<std::uint8_t, kKeySize>;
using Nonce = std::array<std::uint8_t, kNonceSize>;

// AES-256-GCM. Output is ciphertext || 16-byte tag.
Bytes seal(const Key& key, const Nonce& nonce, ByteView plaintext, ByteView associated);

// Returns false (and leaves `plaintext` empty) on any authentication failure,
// including a sealed input shorter than the tag.
bool open(const Key& key, const Nonce& nonce, ByteView sealed, ByteView associated,
          Bytes& plaintext);

}  // namespace aead

}  // namespace medledger
