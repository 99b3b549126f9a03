#include "medledger/policy/state.hpp"

#include <sstream>

#include "medledger/policy/access.hpp"

namespace medledger::policy {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\u00";
          out += kHex[(c >> 4) & 0x0f];
          out += kHex[c & 0x0f];
        } else {
          out += c;
        }
    }
  }
  out += '"';
  return out;
}

const Identity& require_identity(const ChainState& state, const Digest& id) {
  const Identity* who = state.find_identity(id);
  if (who == nullptr) throw TxRejected(RejectReason::UnknownIdentity);
  return *who;
}

bool owns_or_admin(const ChainState& state, const Identity& author, std::uint64_t patient_id) {
  if (author.role == Role::Admin) return true;
  auto owner = state.owner_of(patient_id);
  return owner && *owner == author.identity_id;
}

}  // namespace

const Identity* ChainState::find_identity(const Digest& id) const {
  auto it = identities.find(id);
  return it == identities.end() ? nullptr : &it->second;
}

std::optional<Digest> ChainState::owner_of(std::uint64_t patient_id) const {
  auto it = patient_owner.find(patient_id);
  if (it == patient_owner.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::BadTxId: return "BadTxId";
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::DuplicateTx: return "DuplicateTx";
    case RejectReason::DuplicateIdentity: return "DuplicateIdentity";
    case RejectReason::InvalidField: return "InvalidField";
    case RejectReason::UnknownIdentity: return "UnknownIdentity";
    case RejectReason::AdminRequired: return "AdminRequired";
    case RejectReason::AuthorMismatch: return "AuthorMismatch";
    case RejectReason::AccessDenied: return "AccessDenied";
    case RejectReason::NotOwner: return "NotOwner";
    case RejectReason::UnknownPatient: return "UnknownPatient";
    case RejectReason::UnknownGrantee: return "UnknownGrantee";
    case RejectReason::NoSuchGrant: return "NoSuchGrant";
    case RejectReason::UnknownProvider: return "UnknownProvider";
    case RejectReason::NotParticipant: return "NotParticipant";
  }
  return "Unknown";
}

TxRejected::TxRejected(RejectReason reason)
    : std::runtime_error("transaction rejected: " + std::string(to_string(reason))),
      reason_(reason) {}

void apply_transaction(ChainState& state, const chain::Transaction& tx, const TxContext& ctx) {
  switch (chain::check_transaction(tx)) {
    case chain::TxCheck::Ok: break;
    case chain::TxCheck::BadTxId: throw TxRejected(RejectReason::BadTxId);
    case chain::TxCheck::BadSignature: throw TxRejected(RejectReason::BadSignature);
  }
  if (state.tx_ids.count(tx.tx_id) != 0) throw TxRejected(RejectReason::DuplicateTx);

  const Digest author_id = tx.author_id();

  // Each visitor validates fully before touching `state`.
  std::visit(
      Overloaded{
          [&](const chain::IdentityReg& reg) {
            if (reg.display_name.empty() || reg.display_name.size() > kMaxDisplayNameBytes) {
              throw TxRejected(RejectReason::InvalidField);
            }
            const Digest new_id = chain::identity_id(reg.public_key);
            if (state.identities.count(new_id) != 0) {
              throw TxRejected(RejectReason::DuplicateIdentity);
            }
            const bool self_signed = reg.public_key == tx.author_pubkey;
            const Identity* author = state.find_identity(author_id);
            const bool by_admin = author != nullptr && author->role == Role::Admin;
            if (reg.role == Role::Admin) {
              // The first identity on a chain may bootstrap itself as admin.
              const bool bootstrap = self_signed && state.identities.empty();
              if (!bootstrap && !by_admin) throw TxRejected(RejectReason::AdminRequired);
            } else if (!self_signed && !by_admin) {
              throw TxRejected(RejectReason::AdminRequired);
            }
            state.identities.emplace(
                new_id, Identity{new_id, reg.public_key, reg.role, reg.display_name, ctx.block_index});
          },
          [&](const chain::RecordAnchor& anchor) {
            if (anchor.patient_id == 0) throw TxRejected(RejectReason::InvalidField);
            const Identity& author = require_identity(state, author_id);
            if (anchor.author_id != author_id) throw TxRejected(RejectReason::AuthorMismatch);
            if (author.role == Role::Admin) throw TxRejected(RejectReason::AccessDenied);
            auto owner = state.owner_of(anchor.patient_id);
            if (!owner) {
              // An unclaimed patient id is claimed by the first patient to anchor to it.
              if (author.role != Role::Patient) throw TxRejected(RejectReason::UnknownPatient);
              state.patient_owner.emplace(anchor.patient_id, author_id);
            } else if (!evaluate_access(state, author_id, anchor.patient_id, Action::Write,
                                        ctx.block_time_ms)
                            .allowed) {
              throw TxRejected(RejectReason::AccessDenied);
            }
            state.anchors[anchor.patient_id].push_back(anchor.content_address);
          },
          [&](const chain::AccessGrant& grant) {
            const Identity& author = require_identity(state, author_id);
            if (!state.owner_of(grant.patient_id)) throw TxRejected(RejectReason::UnknownPatient);
            if (!owns_or_admin(state, author, grant.patient_id)) {
              throw TxRejected(RejectReason::NotOwner);
            }
            if (state.find_identity(grant.grantee_id) == nullptr) {
              throw TxRejected(RejectReason::UnknownGrantee);
            }
            state.grants[{grant.patient_id, grant.grantee_id}] =
                Grant{grant.patient_id, grant.grantee_id, grant.scope, grant.expires_at_ms,
                      ctx.block_index};
          },
          [&](const chain::AccessRevoke& revoke) {
            const Identity& author = require_identity(state, author_id);
            if (!state.owner_of(revoke.patient_id)) throw TxRejected(RejectReason::UnknownPatient);
            if (!owns_or_admin(state, author, revoke.patient_id)) {
              throw TxRejected(RejectReason::NotOwner);
            }
            auto it = state.grants.find({revoke.patient_id, revoke.grantee_id});
            if (it == state.grants.end()) throw TxRejected(RejectReason::NoSuchGrant);
            state.grants.erase(it);
          },
          [&](const chain::Appointment& appt) {
            require_identity(state, author_id);
            const Identity* provider = state.find_identity(appt.provider_id);
            if (provider == nullptr || provider->role != Role::Provider) {
              throw TxRejected(RejectReason::UnknownProvider);
            }
            auto owner = state.owner_of(appt.patient_id);
            if (!owner) throw TxRejected(RejectReason::UnknownPatient);
            if (author_id != *owner && author_id != appt.provider_id) {
              throw TxRejected(RejectReason::NotParticipant);
            }
            state.appointments.push_back(AppointmentEntry{ctx.block_index, ctx.tx_index, tx.tx_id,
                                                          appt.patient_id, appt.provider_id,
                                                          author_id, appt.slot_ms, appt.note});
          },
      },
      tx.body);

  state.tx_ids.insert(tx.tx_id);
}

ChainState materialize(const chain::Chain& chain) {
  ChainState state;
  for (const auto& block : chain.blocks) {
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
      apply_transaction(state, block.transactions[i],
                        TxContext{block.header.index, static_cast<std::uint32_t>(i),
                                  block.header.timestamp_ms});
    }
  }
  return state;
}

std::string dump_state(const ChainState& state) {
  std::ostringstream out;
  out << "# medledger state v1\n";
  for (const auto& [id, who] : state.identities) {
    out << "identity " << id.hex() << " role=" << chain::to_string(who.role)
        << " pubkey=" << to_hex(who.public_key) << " block=" << who.registered_in_block
        << " name=" << quoted(who.display_name) << "\n";
  }
  for (const auto& [pid, owner] : state.patient_owner) {
    out << "owner " << pid << " " << owner.hex() << "\n";
  }
  for (const auto& [pid, list] : state.anchors) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      out << "anchor " << pid << " " << i << " " << list[i].hex() << "\n";
    }
  }
  for (const auto& [key, grant] : state.grants) {
    out << "grant " << key.first << " " << key.second.hex()
        << " scope=" << chain::to_string(grant.scope) << " expires=";
    if (grant.expires_at_ms) {
      out << *grant.expires_at_ms;
    } else {
      out << "none";
    }
    out << " block=" << grant.granted_in_block << "\n";
  }
  for (const auto& a : state.appointments) {
    out << "appointment " << a.block_index << ":" << a.tx_index << " tx=" << a.tx_id.hex()
        << " patient=" << a.patient_id << " provider=" << a.provider_id.hex()
        << " author=" << a.author_id.hex() << " slot=" << a.slot_ms << " note=" << quoted(a.note)
        << "\n";
  }
  out << "transactions " << state.tx_ids.size() << "\n";
  return out.str();
}

}  // namespace medledger::policy
