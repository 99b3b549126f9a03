#include "medledger/policy/access.hpp"

namespace medledger::policy {

std::string_view to_string(Action action) { return action == Action::Read ? "read" : "write"; }

std::string_view to_string(DenyReason reason) {
  switch (reason) {
    case DenyReason::None: return "None";
    case DenyReason::UnknownIdentity: return "UnknownIdentity";
    case DenyReason::NoGrant: return "NoGrant";
    case DenyReason::Expired: return "Expired";
    case DenyReason::InsufficientScope: return "InsufficientScope";
  }
  return "Unknown";
}

AccessDecision evaluate_access(const ChainState& state, const Digest& requester,
                               std::uint64_t patient_id, Action action, std::uint64_t now_ms) {
  const Identity* who = state.find_identity(requester);
  if (who == nullptr) return AccessDecision::deny(DenyReason::UnknownIdentity);
  if (who->role == Role::Admin) return AccessDecision::allow();
  if (auto owner = state.owner_of(patient_id); owner && *owner == requester) {
    return AccessDecision::allow();
  }
  auto it = state.grants.find({patient_id, requester});
  if (it == state.grants.end()) return AccessDecision::deny(DenyReason::NoGrant);
  const Grant& grant = it->second;
  if (grant.expires_at_ms && now_ms >= *grant.expires_at_ms) {
    return AccessDecision::deny(DenyReason::Expired);
  }
  if (action == Action::Write && grant.scope != Scope::ReadWrite) {
    return AccessDecision::deny(DenyReason::InsufficientScope);
  }
  return AccessDecision::allow();
}

chain::Transaction make_registration(const KeyPair& key, Role role, std::string display_name,
                                     std::uint64_t issued_ms) {
  return chain::Transaction::make(
      chain::IdentityReg{key.public_key(), role, std::move(display_name)}, issued_ms, key);
}

chain::Transaction make_grant(const KeyPair& patient_key, std::uint64_t patient_id,
                              const Digest& grantee_id, Scope scope,
                              std::optional<std::uint64_t> expires_at_ms,
                              std::uint64_t issued_ms) {
  return chain::Transaction::make(chain::AccessGrant{patient_id, grantee_id, scope, expires_at_ms},
                                  issued_ms, patient_key);
}

chain::Transaction make_revoke(const KeyPair& patient_key, std::uint64_t patient_id,
                               const Digest& grantee_id, std::uint64_t issued_ms) {
  return chain::Transaction::make(chain::AccessRevoke{patient_id, grantee_id}, issued_ms,
                                  patient_key);
}

chain::Transaction make_appointment(const KeyPair& author_key, std::uint64_t patient_id,
                                    const Digest& provider_id, std::uint64_t slot_ms,
                                    std::string note, std::uint64_t issued_ms) {
  return chain::Transaction::make(
      chain::Appointment{patient_id, provider_id, slot_ms, std::move(note)}, issued_ms, author_key);
}

std::vector<AuditEntry> audit_trail(const chain::Chain& chain, std::uint64_t patient_id) {
  // Ownership never changes once claimed, so the final owner is the owner
  // throughout the trail.
  std::optional<Digest> owner;
  for (const auto& block : chain.blocks) {
    for (const auto& tx : block.transactions) {
      if (const auto* anchor = std::get_if<chain::RecordAnchor>(&tx.body);
          anchor != nullptr && anchor->patient_id == patient_id) {
        owner = tx.author_id();
        break;
      }
    }
    if (owner) break;
  }

  std::vector<AuditEntry> trail;
  for (const auto& block : chain.blocks) {
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
      const auto& tx = block.transactions[i];
      bool touches = patient_of(tx.body) == patient_id;
      if (const auto* reg = std::get_if<chain::IdentityReg>(&tx.body); reg != nullptr && owner) {
        touches = chain::identity_id(reg->public_key) == *owner;
      }
      if (!touches) continue;
      trail.push_back(AuditEntry{block.header.index, static_cast<std::uint32_t>(i), tx.tx_id,
                                 std::string(chain::kind_name(tx.body)), chain::summarize(tx)});
    }
  }
  return trail;
}

}  // namespace medledger::policy
