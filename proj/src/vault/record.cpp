#include "medledger/vault/record.hpp"

#include <algorithm>
#include <cmath>

#include "medledger/codec.hpp"

namespace medledger::vault {

std::string_view to_string(VaultErrorCode code) {
  switch (code) {
    case VaultErrorCode::InvalidRecord: return "InvalidRecord";
    case VaultErrorCode::AuthFailure: return "AuthFailure";
    case VaultErrorCode::NotFound: return "NotFound";
    case VaultErrorCode::CorruptBlob: return "CorruptBlob";
    case VaultErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

VaultError::VaultError(VaultErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

void validate(const PatientRecord& record) {
  if (record.username.empty()) throw VaultError(VaultErrorCode::InvalidRecord, "username is empty");
  if (record.username.size() > kMaxUsernameBytes) {
    throw VaultError(VaultErrorCode::InvalidRecord, "username longer than 256 bytes");
  }
  if (record.age > kMaxAge) throw VaultError(VaultErrorCode::InvalidRecord, "age above 200");
  if (record.patient_id == 0) throw VaultError(VaultErrorCode::InvalidRecord, "patient_id must be >= 1");
  if (!std::isfinite(record.temperature) || !std::isfinite(record.time)) {
    throw VaultError(VaultErrorCode::InvalidRecord, "temperature and time must be finite numbers");
  }
}

Bytes serialize(const PatientRecord& record) {
  Writer w;
  w.str(record.username);
  w.u32(record.age);
  w.f64(record.temperature);
  w.f64(record.time);
  w.u64(record.patient_id);
  w.u32(static_cast<std::uint32_t>(record.extra.size()));
  for (const auto& [k, v] : record.extra) {
    w.str(k);
    w.str(v);
  }
  return std::move(w).take();
}

PatientRecord decode_record(ByteView data) {
  Reader r(data);
  PatientRecord record;
  record.username = r.str();
  record.age = r.u32();
  record.temperature = r.f64();
  record.time = r.f64();
  record.patient_id = r.u64();
  std::uint32_t n = r.u32();
  std::string prev;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    if (i > 0 && k <= prev) throw DecodeError("extra keys not strictly sorted");
    std::string v = r.str();
    prev = k;
    record.extra.emplace(std::move(k), std::move(v));
  }
  r.expect_end();
  return record;
}

Bytes serialize(const SealedRecord& sealed) {
  Writer w;
  w.bytes(sealed.ciphertext);
  w.raw(sealed.nonce);
  w.str(sealed.key_id);
  return std::move(w).take();
}

SealedRecord decode_sealed(ByteView data) {
  try {
    Reader r(data);
    SealedRecord sealed;
    sealed.ciphertext = r.bytes();
    for (auto& b : sealed.nonce) b = r.u8();
    sealed.key_id = r.str();
    r.expect_end();
    return sealed;
  } catch (const DecodeError& e) {
    throw VaultError(VaultErrorCode::CorruptBlob, e.what());
  }
}

Bytes associated_data(std::uint64_t patient_id) {
  Writer w;
  w.u64(patient_id);
  return std::move(w).take();
}

SealedRecord seal_record(const PatientRecord& record, const aead::Key& key,
                         const aead::Nonce& nonce, std::string key_id) {
  validate(record);
  SealedRecord sealed;
  sealed.ciphertext = aead::seal(key, nonce, serialize(record), associated_data(record.patient_id));
  sealed.nonce = nonce;
  sealed.key_id = std::move(key_id);
  return sealed;
}

PatientRecord open_record(const SealedRecord& sealed, const aead::Key& key,
                          std::uint64_t patient_id) {
  Bytes plain;
  if (!aead::open(key, sealed.nonce, sealed.ciphertext, associated_data(patient_id), plain)) {
    throw VaultError(VaultErrorCode::AuthFailure, "record failed authentication");
  }
  try {
    return decode_record(plain);
  } catch (const DecodeError& e) {
    // Authenticated but not a record: the sealer wrote garbage.
    throw VaultError(VaultErrorCode::AuthFailure, e.what());
  }
}

aead::Nonce synthetic_nonce(const aead::Key& key, const PatientRecord& record) {
  static constexpr std::string_view kDomain = "medledger-record-nonce-v1";
  Bytes material(kDomain.begin(), kDomain.end());
  Bytes body = serialize(record);
  material.insert(material.end(), body.begin(), body.end());
  Digest mac = hmac_sha256(key, material);
  aead::Nonce nonce{};
  std::copy_n(mac.bytes.begin(), nonce.size(), nonce.begin());
  return nonce;
}

chain::Transaction anchor_record(const Digest& address, std::uint64_t patient_id,
                                 const KeyPair& author, std::uint64_t issued_ms) {
  return chain::Transaction::make(
      chain::RecordAnchor{patient_id, address, chain::identity_id(author.public_key())}, issued_ms,
      author);
}

chain::Transaction anchor_record(const policy::ChainState& state, const Digest& address,
                                 std::uint64_t patient_id, const KeyPair& author,
                                 std::uint64_t issued_ms) {
  const policy::Identity* who = state.find_identity(chain::identity_id(author.public_key()));
  if (who == nullptr || who->role == chain::Role::Admin) {
    throw policy::TxRejected(policy::RejectReason::UnknownIdentity);
  }
  return anchor_record(address, patient_id, author, issued_ms);
}

}  // namespace medledger::vault
