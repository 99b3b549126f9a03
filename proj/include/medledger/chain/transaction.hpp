#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "medledger/codec.hpp"
#include "medledger/crypto.hpp"

namespace medledger::chain {

enum class Role : std::uint8_t { Patient = 0, Provider = 1, Admin = 2 };
enum class Scope : std::uint8_t { Read = 0, ReadWrite = 1 };

std::string_view to_string(Role role);
std::string_view to_string(Scope scope);
// Throws std::invalid_argument for unknown names.
Role parse_role(std::string_view name);
Scope parse_scope(std::string_view name);

// identity_id = SHA-256(public key)
Digest identity_id(const PublicKey& pk);

struct IdentityReg {
  PublicKey public_key{};
  Role role = Role::Patient;
  std::string display_name;
  bool operator==(const IdentityReg&) const = default;
};

struct RecordAnchor {
  std::uint64_t patient_id = 0;
  Digest content_address;
  Digest author_id;
  bool operator==(const RecordAnchor&) const = default;
};

struct AccessGrant {
  std::uint64_t patient_id = 0;
  Digest grantee_id;
  Scope scope = Scope::Read;
  std::optional<std::uint64_t> expires_at_ms;
  bool operator==(const AccessGrant&) const = default;
};

struct AccessRevoke {
  std::uint64_t patient_id = 0;
  Digest grantee_id;
  bool operator==(const AccessRevoke&) const = default;
};

struct Appointment {
  std::uint64_t patient_id = 0;
  Digest provider_id;
  std::uint64_t slot_ms = 0;
  std::string note;
  bool operator==(const Appointment&) const = default;
};

using TxBody = std::variant<IdentityReg, RecordAnchor, AccessGrant, AccessRevoke, Appointment>;

std::string_view kind_name(const TxBody& body);
// Patient the transaction is about, if any (registrations have none).
std::optional<std::uint64_t> patient_of(const TxBody& body);

// A signed transaction. The body covers the kind tag, the author key, the
// issue time and the kind-specific fields; tx_id is the hash of that body and
// the signature is over tx_id.
struct Transaction {
  TxBody body;
  PublicKey author_pubkey{};
  std::uint64_t issued_ms = 0;
  Digest tx_id;
  Signature signature{};

  static Transaction make(TxBody body, std::uint64_t issued_ms, const KeyPair& author);

  Digest author_id() const { return identity_id(author_pubkey); }
  bool operator==(const Transaction&) const = default;
};

Bytes serialize_body(const Transaction& tx);
Digest compute_tx_id(const Transaction& tx);

void encode(Writer& w, const Transaction& tx);
Transaction decode_transaction(Reader& r);
Bytes serialize(const Transaction& tx);
Bytes serialize(std::span<const Transaction> txs);

enum class TxCheck { Ok, BadTxId, BadSignature };
TxCheck check_transaction(const Transaction& tx);
inline bool verify_transaction(const Transaction& tx) { return check_transaction(tx) == TxCheck::Ok; }

// One-line human summary used by audit trails and the event log.
std::string summarize(const Transaction& tx);

}  // namespace medledger::chain
