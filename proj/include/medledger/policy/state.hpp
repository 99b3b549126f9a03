#pragma once

// Materialized chain state and the transaction rules that build it.
//
// The state is a pure left fold over blocks, then transactions in order.
// apply_transaction both validates and applies: block acceptance runs it on a
// copy of the tip state, so a committed chain always folds without error.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "medledger/chain/block.hpp"

namespace medledger::policy {

using chain::Role;
using chain::Scope;

struct Identity {
  Digest identity_id;
  PublicKey public_key{};
  Role role = Role::Patient;
  std::string display_name;
  std::uint64_t registered_in_block = 0;
  bool operator==(const Identity&) const = default;
};

struct Grant {
  std::uint64_t patient_id = 0;
  Digest grantee_id;
  Scope scope = Scope::Read;
  std::optional<std::uint64_t> expires_at_ms;
  std::uint64_t granted_in_block = 0;
  bool operator==(const Grant&) const = default;
};

struct AppointmentEntry {
  std::uint64_t block_index = 0;
  std::uint32_t tx_index = 0;
  Digest tx_id;
  std::uint64_t patient_id = 0;
  Digest provider_id;
  Digest author_id;
  std::uint64_t slot_ms = 0;
  std::string note;
  bool operator==(const AppointmentEntry&) const = default;
};

using GrantKey = std::pair<std::uint64_t, Digest>;

struct ChainState {
  std::map<Digest, Identity> identities;
  std::map<std::uint64_t, Digest> patient_owner;
  std::map<std::uint64_t, std::vector<Digest>> anchors;
  std::map<GrantKey, Grant> grants;
  std::vector<AppointmentEntry> appointments;
  // Every committed tx_id; a replayed transaction is rejected.
  std::set<Digest> tx_ids;

  const Identity* find_identity(const Digest& id) const;
  std::optional<Digest> owner_of(std::uint64_t patient_id) const;

  bool operator==(const ChainState&) const = default;
};

enum class RejectReason {
  BadTxId,
  BadSignature,
  DuplicateTx,
  DuplicateIdentity,
  InvalidField,
  UnknownIdentity,
  AdminRequired,
  AuthorMismatch,
  AccessDenied,
  NotOwner,
  UnknownPatient,
  UnknownGrantee,
  NoSuchGrant,
  UnknownProvider,
  NotParticipant,
};

std::string_view to_string(RejectReason reason);

class TxRejected : public std::runtime_error {
 public:
  explicit TxRejected(RejectReason reason);
  RejectReason reason() const { return reason_; }

 private:
  RejectReason reason_;
};

// Where a transaction sits; block_time_ms is the "now" for expiry checks made
// while validating it.
struct TxContext {
  std::uint64_t block_index = 0;
  std::uint32_t tx_index = 0;
  std::uint64_t block_time_ms = 0;
};

constexpr std::size_t kMaxDisplayNameBytes = 256;

// Validates `tx` against `state` and applies it. Throws TxRejected and leaves
// `state` untouched on rejection.
void apply_transaction(ChainState& state, const chain::Transaction& tx, const TxContext& ctx);

// Throws TxRejected if the chain contains an invalid transaction; chains built
// through block acceptance never do.
ChainState materialize(const chain::Chain& chain);

// Deterministic text rendering, sorted by key. Used for golden comparisons and
// restart checks.
std::string dump_state(const ChainState& state);

}  // namespace medledger::policy
