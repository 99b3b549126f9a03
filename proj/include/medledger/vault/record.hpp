#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "medledger/chain/transaction.hpp"
#include "medledger/crypto.hpp"
#include "medledger/policy/state.hpp"

namespace medledger::vault {

// The clinical payload kept off-chain. `extra` carries free-form fields
// beyond the five the dashboard form collects; it is not validated.
struct PatientRecord {
  std::string username;
  std::uint32_t age = 0;
  double temperature = 0.0;
  double time = 0.0;
  std::uint64_t patient_id = 0;
  std::map<std::string, std::string> extra;

  bool operator==(const PatientRecord&) const = default;
};

constexpr std::size_t kMaxUsernameBytes = 256;
constexpr std::uint32_t kMaxAge = 200;

enum class VaultErrorCode { InvalidRecord, AuthFailure, NotFound, CorruptBlob, IoFailure };

std::string_view to_string(VaultErrorCode code);

class VaultError : public std::runtime_error {
 public:
  VaultError(VaultErrorCode code, const std::string& detail);
  VaultErrorCode code() const { return code_; }

 private:
  VaultErrorCode code_;
};

// Throws VaultError(InvalidRecord) naming the first violated constraint.
void validate(const PatientRecord& record);

Bytes serialize(const PatientRecord& record);
PatientRecord decode_record(ByteView data);

struct SealedRecord {
  Bytes ciphertext;  // plaintext length + 16-byte tag
  aead::Nonce nonce{};
  std::string key_id;

  bool operator==(const SealedRecord&) const = default;
};

Bytes serialize(const SealedRecord& sealed);
// Throws VaultError(CorruptBlob) on bytes that do not frame a sealed record.
SealedRecord decode_sealed(ByteView data);

// patient_id as 8 big-endian bytes; bound into the AEAD tag.
Bytes associated_data(std::uint64_t patient_id);

SealedRecord seal_record(const PatientRecord& record, const aead::Key& key,
                         const aead::Nonce& nonce, std::string key_id = {});

// Throws VaultError(AuthFailure) on a wrong key, tampered ciphertext or a
// patient_id that differs from the one sealed in.
PatientRecord open_record(const SealedRecord& sealed, const aead::Key& key,
                          std::uint64_t patient_id);

// Nonce derived from the key and the record bytes. Sealing the same record
// twice under one key then yields the same blob, and a nonce only ever repeats
// for an identical plaintext.
aead::Nonce synthetic_nonce(const aead::Key& key, const PatientRecord& record);

// Signed RecordAnchor committing `address` for `patient_id`.
chain::Transaction anchor_record(const Digest& address, std::uint64_t patient_id,
                                 const KeyPair& author, std::uint64_t issued_ms);

// As above, but first requires the author to be registered in `state` as a
// patient or provider; throws policy::TxRejected(UnknownIdentity) otherwise.
chain::Transaction anchor_record(const policy::ChainState& state, const Digest& address,
                                 std::uint64_t patient_id, const KeyPair& author,
                                 std::uint64_t issued_ms);

}  // namespace medledger::vault
