#include "medledger/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <algorithm>
#include <memory>
#include <mutex>
#include <unordered_set>

namespace medledger {

namespace {

struct EvpPkeyFree {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct EvpMdCtxFree {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct EvpCipherCtxFree {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, EvpPkeyFree>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, EvpMdCtxFree>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, EvpCipherCtxFree>;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex character");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != kSize * 2) throw std::invalid_argument("digest hex must be 64 chars");
  return from_bytes(medledger::from_hex(hex));
}

Digest Digest::from_bytes(ByteView data) {
  if (data.size() != kSize) throw std::invalid_argument("digest must be 32 bytes");
  Digest d;
  std::copy(data.begin(), data.end(), d.bytes.begin());
  return d;
}

bool Digest::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

Digest sha256(ByteView data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != Digest::kSize) {
    throw CryptoError("sha256 failed");
  }
  return d;
}

Digest hmac_sha256(ByteView key, ByteView data) {
  Digest d;
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           d.bytes.data(), &len) == nullptr ||
      len != Digest::kSize) {
    throw CryptoError("hmac-sha256 failed");
  }
  return d;
}

void random_fill(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw CryptoError("RAND_bytes failed");
  }
}

KeyPair KeyPair::generate() { return from_seed(random_array<32>()); }

KeyPair KeyPair::from_seed(const Seed& seed) {
  PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!key) throw CryptoError("invalid ed25519 seed");
  PublicKey pk{};
  std::size_t len = pk.size();
  if (EVP_PKEY_get_raw_public_key(key.get(), pk.data(), &len) != 1 || len != pk.size()) {
    throw CryptoError("ed25519 public key derivation failed");
  }
  return KeyPair(seed, pk);
}

Signature KeyPair::sign(ByteView message) const {
  PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed_.data(), seed_.size()));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!key || !ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    throw CryptoError("ed25519 sign init failed");
  }
  Signature sig{};
  std::size_t len = sig.size();
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1 ||
      len != sig.size()) {
    throw CryptoError("ed25519 sign failed");
  }
  return sig;
}

bool ed25519_verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pk.data(), pk.size()));
  if (!key) return false;
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), message.data(), message.size()) == 1;
}

namespace {

struct DigestHash {
  std::size_t operator()(const Digest& d) const {
    std::size_t h = 0;
    std::copy_n(d.bytes.begin(), sizeof(h), reinterpret_cast<std::uint8_t*>(&h));
    return h;
  }
};

class VerifiedSignatures {
 public:
  static constexpr std::size_t kMaxEntries = 1 << 16;

  bool contains(const Digest& key) {
    std::lock_guard lock(mu_);
    return entries_.count(key) != 0;
  }

  void insert(const Digest& key) {
    std::lock_guard lock(mu_);
    if (entries_.size() >= kMaxEntries) entries_.clear();
    entries_.insert(key);
  }

 private:
  std::mutex mu_;
  std::unordered_set<Digest, DigestHash> entries_;
};

VerifiedSignatures& verified_signatures() {
  static VerifiedSignatures cache;
  return cache;
}

}  // namespace

bool ed25519_verify_cached(const PublicKey& pk, ByteView message, const Signature& sig) {
  Bytes material;
  material.reserve(pk.size() + sig.size() + message.size());
  material.insert(material.end(), pk.begin(), pk.end());
  material.insert(material.end(), sig.begin(), sig.end());
  material.insert(material.end(), message.begin(), message.end());
  Digest key = sha256(material);

  auto& cache = verified_signatures();
  if (cache.contains(key)) return true;
  if (!ed25519_verify(pk, message, sig)) return false;
  cache.insert(key);
  return true;
}

namespace aead {

Bytes seal(const Key& key, const Nonce& nonce, ByteView plaintext, ByteView associated) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("cipher ctx alloc failed");
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr) != 1 ||
      EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1) {
    throw CryptoError("aes-gcm init failed");
  }
  int len = 0;
  if (!associated.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, associated.data(),
                        static_cast<int>(associated.size())) != 1) {
    throw CryptoError("aes-gcm aad failed");
  }
  Bytes out(plaintext.size() + kTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1) {
      throw CryptoError("aes-gcm encrypt failed");
    }
    written = len;
  }
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    throw CryptoError("aes-gcm final failed");
  }
  written += len;
  if (static_cast<std::size_t>(written) != plaintext.size() ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, out.data() + written) != 1) {
    throw CryptoError("aes-gcm tag failed");
  }
  return out;
}

bool open(const Key& key, const Nonce& nonce, ByteView sealed, ByteView associated,
          Bytes& plaintext) {
  plaintext.clear();
  if (sealed.size() < kTagSize) return false;
  const std::size_t body = sealed.size() - kTagSize;

  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("cipher ctx alloc failed");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr) != 1 ||
      EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1) {
    throw CryptoError("aes-gcm init failed");
  }
  int len = 0;
  if (!associated.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, associated.data(),
                        static_cast<int>(associated.size())) != 1) {
    return false;
  }
  Bytes out(body);
  int written = 0;
  if (body > 0) {
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(body)) != 1) {
      return false;
    }
    written = len;
  }
  Bytes tag(sealed.begin() + static_cast<std::ptrdiff_t>(body), sealed.end());
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) != 1) return false;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) return false;
  plaintext = std::move(out);
  return true;
}

}  // namespace aead

}  // namespace medledger
