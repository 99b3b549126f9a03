#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medledger/policy/state.hpp"

namespace medledger::policy {

enum class Action { Read, Write };

enum class DenyReason { None, UnknownIdentity, NoGrant, Expired, InsufficientScope };

std::string_view to_string(Action action);
std::string_view to_string(DenyReason reason);

struct AccessDecision {
  bool allowed = false;
  DenyReason reason = DenyReason::None;

  static AccessDecision allow() { return {true, DenyReason::None}; }
  static AccessDecision deny(DenyReason r) { return {false, r}; }
  bool operator==(const AccessDecision&) const = default;
};

// Allow iff the requester owns the patient, is an admin, or holds an unexpired
// grant whose scope covers the action. A grant expires at expires_at_ms
// (now_ms >= expires_at_ms is expired).
AccessDecision evaluate_access(const ChainState& state, const Digest& requester,
                               std::uint64_t patient_id, Action action, std::uint64_t now_ms);

chain::Transaction make_registration(const KeyPair& key, Role role, std::string display_name,
                                     std::uint64_t issued_ms);
chain::Transaction make_grant(const KeyPair& patient_key, std::uint64_t patient_id,
                              const Digest& grantee_id, Scope scope,
                              std::optional<std::uint64_t> expires_at_ms,
                              std::uint64_t issued_ms);
chain::Transaction make_revoke(const KeyPair& patient_key, std::uint64_t patient_id,
                               const Digest& grantee_id, std::uint64_t issued_ms);
chain::Transaction make_appointment(const KeyPair& author_key, std::uint64_t patient_id,
                                    const Digest& provider_id, std::uint64_t slot_ms,
                                    std::string note, std::uint64_t issued_ms);

struct AuditEntry {
  std::uint64_t block_index = 0;
  std::uint32_t tx_index = 0;
  Digest tx_id;
  std::string kind;
  std::string summary;
  bool operator==(const AuditEntry&) const = default;
};

// Transactions touching `patient_id` in chain order. The owner's own
// IdentityReg is included as the opening entry once the patient is claimed.
std::vector<AuditEntry> audit_trail(const chain::Chain& chain, std::uint64_t patient_id);

}  // namespace medledger::policy
