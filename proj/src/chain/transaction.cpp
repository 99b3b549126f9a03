#include "medledger/chain/transaction.hpp"

#include <sstream>
#include <stdexcept>

namespace medledger::chain {

namespace {

// Wire tags for the body variant, in declaration order.
enum class TxKind : std::uint8_t {
  IdentityReg = 1,
  RecordAnchor = 2,
  AccessGrant = 3,
  AccessRevoke = 4,
  Appointment = 5,
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Role decode_role(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(Role::Admin)) throw DecodeError("role out of range");
  return static_cast<Role>(v);
}

Scope decode_scope(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(Scope::ReadWrite)) throw DecodeError("scope out of range");
  return static_cast<Scope>(v);
}

void encode_body(Writer& w, const Transaction& tx) {
  std::visit(Overloaded{
                 [&](const IdentityReg& b) {
                   w.u8(static_cast<std::uint8_t>(TxKind::IdentityReg));
                   w.bytes(tx.author_pubkey);
                   w.u64(tx.issued_ms);
                   w.bytes(b.public_key);
                   w.u8(static_cast<std::uint8_t>(b.role));
                   w.str(b.display_name);
                 },
                 [&](const RecordAnchor& b) {
                   w.u8(static_cast<std::uint8_t>(TxKind::RecordAnchor));
                   w.bytes(tx.author_pubkey);
                   w.u64(tx.issued_ms);
                   w.u64(b.patient_id);
                   w.digest(b.content_address);
                   w.digest(b.author_id);
                 },
                 [&](const AccessGrant& b) {
                   w.u8(static_cast<std::uint8_t>(TxKind::AccessGrant));
                   w.bytes(tx.author_pubkey);
                   w.u64(tx.issued_ms);
                   w.u64(b.patient_id);
                   w.digest(b.grantee_id);
                   w.u8(static_cast<std::uint8_t>(b.scope));
                   w.boolean(b.expires_at_ms.has_value());
                   if (b.expires_at_ms) w.u64(*b.expires_at_ms);
                 },
                 [&](const AccessRevoke& b) {
                   w.u8(static_cast<std::uint8_t>(TxKind::AccessRevoke));
                   w.bytes(tx.author_pubkey);
                   w.u64(tx.issued_ms);
                   w.u64(b.patient_id);
                   w.digest(b.grantee_id);
                 },
                 [&](const Appointment& b) {
                   w.u8(static_cast<std::uint8_t>(TxKind::Appointment));
                   w.bytes(tx.author_pubkey);
                   w.u64(tx.issued_ms);
                   w.u64(b.patient_id);
                   w.digest(b.provider_id);
                   w.u64(b.slot_ms);
                   w.str(b.note);
                 },
             },
             tx.body);
}

void decode_body(Reader& r, Transaction& tx) {
  std::uint8_t kind = r.u8();
  tx.author_pubkey = r.fixed_bytes<32>();
  tx.issued_ms = r.u64();
  switch (static_cast<TxKind>(kind)) {
    case TxKind::IdentityReg: {
      IdentityReg b;
      b.public_key = r.fixed_bytes<32>();
      b.role = decode_role(r.u8());
      b.display_name = r.str();
      tx.body = std::move(b);
      return;
    }
    case TxKind::RecordAnchor: {
      RecordAnchor b;
      b.patient_id = r.u64();
      b.content_address = r.digest();
      b.author_id = r.digest();
      tx.body = b;
      return;
    }
    case TxKind::AccessGrant: {
      AccessGrant b;
      b.patient_id = r.u64();
      b.grantee_id = r.digest();
      b.scope = decode_scope(r.u8());
      if (r.boolean()) b.expires_at_ms = r.u64();
      tx.body = b;
      return;
    }
    case TxKind::AccessRevoke: {
      AccessRevoke b;
      b.patient_id = r.u64();
      b.grantee_id = r.digest();
      tx.body = b;
      return;
    }
    case TxKind::Appointment: {
      Appointment b;
      b.patient_id = r.u64();
      b.provider_id = r.digest();
      b.slot_ms = r.u64();
      b.note = r.str();
      tx.body = std::move(b);
      return;
    }
  }
  throw DecodeError("unknown transaction kind");
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Patient: return "patient";
    case Role::Provider: return "provider";
    case Role::Admin: return "admin";
  }
  return "unknown";
}

std::string_view to_string(Scope scope) {
  return scope == Scope::Read ? "read" : "read_write";
}

Role parse_role(std::string_view name) {
  if (name == "patient") return Role::Patient;
  if (name == "provider") return Role::Provider;
  if (name == "admin") return Role::Admin;
  throw std::invalid_argument("unknown role: " + std::string(name));
}

Scope parse_scope(std::string_view name) {
  if (name == "read") return Scope::Read;
  if (name == "read_write") return Scope::ReadWrite;
  throw std::invalid_argument("unknown scope: " + std::string(name));
}

Digest identity_id(const PublicKey& pk) { return sha256(pk); }

std::string_view kind_name(const TxBody& body) {
  return std::visit(Overloaded{
                        [](const IdentityReg&) { return std::string_view("IdentityReg"); },
                        [](const RecordAnchor&) { return std::string_view("RecordAnchor"); },
                        [](const AccessGrant&) { return std::string_view("AccessGrant"); },
                        [](const AccessRevoke&) { return std::string_view("AccessRevoke"); },
                        [](const Appointment&) { return std::string_view("Appointment"); },
                    },
                    body);
}

std::optional<std::uint64_t> patient_of(const TxBody& body) {
  return std::visit(Overloaded{
                        [](const IdentityReg&) -> std::optional<std::uint64_t> { return std::nullopt; },
                        [](const auto& b) -> std::optional<std::uint64_t> { return b.patient_id; },
                    },
                    body);
}

Transaction Transaction::make(TxBody body, std::uint64_t issued_ms, const KeyPair& author) {
  Transaction tx;
  tx.body = std::move(body);
  tx.author_pubkey = author.public_key();
  tx.issued_ms = issued_ms;
  tx.tx_id = compute_tx_id(tx);
  tx.signature = author.sign(tx.tx_id.bytes);
  return tx;
}

Bytes serialize_body(const Transaction& tx) {
  Writer w;
  encode_body(w, tx);
  return std::move(w).take();
}

Digest compute_tx_id(const Transaction& tx) { return sha256(serialize_body(tx)); }

void encode(Writer& w, const Transaction& tx) {
  encode_body(w, tx);
  w.digest(tx.tx_id);
  w.bytes(tx.signature);
}

Transaction decode_transaction(Reader& r) {
  Transaction tx;
  decode_body(r, tx);
  tx.tx_id = r.digest();
  tx.signature = r.fixed_bytes<64>();
  return tx;
}

Bytes serialize(const Transaction& tx) {
  Writer w;
  encode(w, tx);
  return std::move(w).take();
}

Bytes serialize(std::span<const Transaction> txs) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(txs.size()));
  for (const auto& tx : txs) encode(w, tx);
  return std::move(w).take();
}

TxCheck check_transaction(const Transaction& tx) {
  if (compute_tx_id(tx) != tx.tx_id) return TxCheck::BadTxId;
  if (!ed25519_verify_cached(tx.author_pubkey, tx.tx_id.bytes, tx.signature)) {
    return TxCheck::BadSignature;
  }
  return TxCheck::Ok;
}

std::string summarize(const Transaction& tx) {
  std::ostringstream out;
  out << kind_name(tx.body);
  std::visit(Overloaded{
                 [&](const IdentityReg& b) {
                   out << " role=" << to_string(b.role) << " name=" << b.display_name
                       << " id=" << identity_id(b.public_key).hex();
                 },
                 [&](const RecordAnchor& b) {
                   out << " patient=" << b.patient_id << " address=" << b.content_address.hex()
                       << " author=" << b.author_id.hex();
                 },
                 [&](const AccessGrant& b) {
                   out << " patient=" << b.patient_id << " grantee=" << b.grantee_id.hex()
                       << " scope=" << to_string(b.scope) << " expires=";
                   if (b.expires_at_ms) {
                     out << *b.expires_at_ms;
                   } else {
                     out << "none";
                   }
                 },
                 [&](const AccessRevoke& b) {
                   out << " patient=" << b.patient_id << " grantee=" << b.grantee_id.hex();
                 },
                 [&](const Appointment& b) {
                   out << " patient=" << b.patient_id << " provider=" << b.provider_id.hex()
                       << " slot=" << b.slot_ms;
                 },
             },
             tx.body);
  return out.str();
}

}  // namespace medledger::chain
