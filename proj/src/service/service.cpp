#include "medledger/service/service.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "json.hpp"
#include "medledger/chain/chain_log.hpp"

namespace medledger::service {

namespace {

namespace fs = std::filesystem;
using policy::Action;
using policy::RejectReason;

ApiError rejected(const policy::TxRejected& e) {
  int status = 403;
  switch (e.reason()) {
    case RejectReason::InvalidField:
    case RejectReason::UnknownGrantee:
    case RejectReason::UnknownProvider:
      status = 400;
      break;
    case RejectReason::UnknownPatient:
    case RejectReason::NoSuchGrant:
      status = 404;
      break;
    case RejectReason::DuplicateTx:
    case RejectReason::DuplicateIdentity:
      status = 409;
      break;
    case RejectReason::BadTxId:
    case RejectReason::BadSignature:
      status = 500;
      break;
    default:
      break;
  }
  return ApiError(status, std::string(policy::to_string(e.reason())), e.what());
}

ApiError denied(const policy::AccessDecision& d) {
  return ApiError(403, std::string(policy::to_string(d.reason)), "access denied");
}

template <std::size_t N>
std::array<std::uint8_t, N> parse_fixed_hex(const std::string& hex, std::string_view what) {
  Bytes b;
  try {
    b = from_hex(hex);
  } catch (const std::exception&) {
    throw ApiError(400, "BadRequest", std::string(what) + " is not hex");
  }
  if (b.size() != N) throw ApiError(400, "BadRequest", std::string(what) + " has the wrong length");
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

nlohmann::json to_json(const AccessLogEntry& e) {
  return {{"at_ms", e.at_ms},
          {"requester", e.requester.hex()},
          {"patient_id", e.patient_id},
          {"action", policy::to_string(e.action)},
          {"allowed", e.decision.allowed},
          {"reason", policy::to_string(e.decision.reason)},
          {"endpoint", e.endpoint}};
}

std::optional<AccessLogEntry> access_entry_from_json(const nlohmann::json& j) {
  try {
    AccessLogEntry e;
    e.at_ms = j.at("at_ms").get<std::uint64_t>();
    e.requester = Digest::from_hex(j.at("requester").get<std::string>());
    e.patient_id = j.at("patient_id").get<std::uint64_t>();
    e.action = j.at("action").get<std::string>() == "write" ? Action::Write : Action::Read;
    e.decision.allowed = j.at("allowed").get<bool>();
    const auto reason = j.at("reason").get<std::string>();
    for (auto r : {policy::DenyReason::None, policy::DenyReason::UnknownIdentity, policy::DenyReason::NoGrant,
                   policy::DenyReason::Expired, policy::DenyReason::InsufficientScope}) {
      if (policy::to_string(r) == reason) e.decision.reason = r;
    }
    e.endpoint = j.at("endpoint").get<std::string>();
    return e;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ApiError::ApiError(int status, std::string code, std::string message)
    : std::runtime_error(std::move(message)), status_(status), code_(std::move(code)) {}

EhrService::EhrService(ServiceConfig config, Clock clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      blobs_(config_.vault_dir),
      keystore_(config_.keystore_dir),
      sessions_(config_.session_ttl_ms, clock_),
      ledger_(config_.difficulty_bits) {
  if (config_.difficulty_bits > chain::kMaxDifficultyBits) throw StartupError("difficulty_bits must be in 0..=32");
  const fs::path& log = config_.chain_log;
  if (!fs::exists(log)) {
    if (log.has_parent_path()) fs::create_directories(log.parent_path());
    chain::write_chain_log(log, chain::Chain::genesis_only());
  } else {
    chain::ChainLogContents contents;
    try {
      contents = chain::read_chain_log(log);
    } catch (const chain::ChainLogError& e) {
      throw StartupError(e.what());
    }
    if (contents.malformed_at) {
      throw StartupError("chain log record " + std::to_string(*contents.malformed_at) +
                         " does not decode: " + contents.error);
    }
    try {
      ledger_ = chain::Ledger::replay(contents.chain, config_.difficulty_bits);
    } catch (const chain::AppendError& e) {
      throw StartupError(std::string("chain log does not replay: ") + e.what());
    }
  }
  pending_state_ = ledger_.state();
  for (const auto& block : ledger_.chain().blocks) {
    for (const auto& tx : block.transactions) last_issue_ms_ = std::max(last_issue_ms_, tx.issued_ms);
  }
  access_log_path_ = log;
  access_log_path_ += ".access.jsonl";
  load_access_log();
}

void EhrService::load_access_log() {
  std::ifstream in(access_log_path_);
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (auto e = access_entry_from_json(j)) access_log_.push_back(std::move(*e));
  }
}

policy::AccessDecision EhrService::check_access(const policy::ChainState& state, const Digest& requester,
                                                std::uint64_t patient_id, Action action, std::string endpoint) {
  AccessLogEntry e;
  e.at_ms = clock_();
  e.requester = requester;
  e.patient_id = patient_id;
  e.action = action;
  e.decision = policy::evaluate_access(state, requester, patient_id, action, e.at_ms);
  e.endpoint = std::move(endpoint);
  const policy::AccessDecision decision = e.decision;

  std::lock_guard lock(access_mu_);
  std::ofstream out(access_log_path_, std::ios::app);
  out << to_json(e).dump() << '\n';
  access_log_.push_back(std::move(e));
  return decision;
}

Challenge EhrService::challenge() { return sessions_.issue_challenge(); }

Session EhrService::login(const std::string& user, const std::string& challenge_hex,
                          const std::string& signature_hex) {
  const auto nonce = parse_fixed_hex<32>(challenge_hex, "challenge");
  const auto signature = parse_fixed_hex<64>(signature_hex, "signature");

  policy::Identity who;
  {
    std::shared_lock lock(mu_);
    const policy::ChainState& st = ledger_.state();
    const policy::Identity* found = nullptr;
    if (user.size() == 64) {
      try {
        found = st.find_identity(Digest::from_hex(user));
      } catch (const std::exception&) {
      }
    }
    if (found == nullptr) {
      std::size_t matches = 0;
      for (const auto& [id, ident] : st.identities) {
        if (ident.display_name == user) {
          found = &ident;
          ++matches;
        }
      }
      if (matches > 1) throw ApiError(409, "AmbiguousUser", "several identities use that name; log in by id");
    }
    if (found == nullptr) throw ApiError(404, "UnknownUser", "no registered identity matches");
    who = *found;
  }
  if (!sessions_.consume_challenge(nonce)) {
    throw ApiError(401, "BadChallenge", "challenge unknown, used or expired");
  }
  if (!ed25519_verify(who.public_key, login_message(nonce), signature)) {
    throw ApiError(401, "BadSignature", "signature does not match the registered key");
  }
  return sessions_.create(who.identity_id);
}

Session EhrService::authenticate(const std::string& token) const {
  auto r = sessions_.resolve(token);
  if (auto* s = std::get_if<Session>(&r)) return *s;
  switch (std::get<SessionError>(r)) {
    case SessionError::Missing: throw ApiError(401, "Unauthorized", "bearer token required");
    case SessionError::BadToken: throw ApiError(401, "BadToken", "unknown session token");
    case SessionError::TokenExpired: throw ApiError(401, "TokenExpired", "session expired");
  }
  throw ApiError(401, "Unauthorized", "bearer token required");
}

const policy::Identity& EhrService::require_identity(const policy::ChainState& state, const Session& s) const {
  const policy::Identity* who = state.find_identity(s.identity_id);
  if (who == nullptr) throw ApiError(403, "UnknownIdentity", "session identity is not registered");
  return *who;
}

policy::Identity EhrService::identity_of(const Session& session) const {
  std::shared_lock lock(mu_);
  return require_identity(ledger_.state(), session);
}

KeyPair EhrService::signing_key(const Digest& identity) const {
  auto key = keystore_.identity(identity);
  if (!key) throw ApiError(409, "KeyNotHeld", "the service holds no signing key for this identity");
  return key->key_pair();
}

std::uint64_t EhrService::next_issue_ms() {
  // Strictly increasing so identical requests still get distinct tx ids.
  last_issue_ms_ = std::max(clock_(), last_issue_ms_ + 1);
  return last_issue_ms_;
}

TxResult EhrService::commit(chain::Transaction tx) {
  policy::ChainState next = pending_state_;
  try {
    policy::apply_transaction(next, tx,
                              {ledger_.chain().tip().header.index + 1, static_cast<std::uint32_t>(pending_.size()),
                               clock_()});
  } catch (const policy::TxRejected& e) {
    throw rejected(e);
  }
  pending_.push_back(tx);
  pending_state_ = std::move(next);

  TxResult result{tx.tx_id, std::nullopt};
  if (config_.auto_mine) {
    const MineResult mined = mine_locked();
    if (std::ranges::find(mined.dropped, tx.tx_id) == mined.dropped.end()) result.block_index = mined.block_index;
  }
  return result;
}

MineResult EhrService::mine() {
  std::unique_lock lock(mu_);
  return mine_locked();
}

MineResult EhrService::mine_locked() {
  if (pending_.empty()) throw ApiError(409, "NothingToMine", "no pending transactions");
  const std::uint64_t now = std::max(clock_(), ledger_.chain().tip().header.timestamp_ms);
  const chain::BlockHeader parent = ledger_.chain().tip().header;

  // Re-check against the committed state at the block's own time: a grant may
  // have expired since the transaction was queued.
  MineResult result;
  policy::ChainState scratch = ledger_.state();
  std::vector<chain::Transaction> txs;
  for (const auto& tx : pending_) {
    try {
      policy::apply_transaction(scratch, tx, {parent.index + 1, static_cast<std::uint32_t>(txs.size()), now});
      txs.push_back(tx);
    } catch (const policy::TxRejected&) {
      result.dropped.push_back(tx.tx_id);
    }
  }
  pending_.clear();
  pending_state_ = ledger_.state();
  if (txs.empty()) throw ApiError(409, "NothingToMine", "every pending transaction was dropped");

  chain::Block block = chain::mine_block(parent, std::move(txs), config_.difficulty_bits, now, 0);
  // Persist only a block the ledger will accept; then commit in memory.
  (void)chain::validate_block(ledger_.chain(), ledger_.state(), block, config_.difficulty_bits);
  chain::append_to_chain_log(config_.chain_log, block);
  ledger_.append(block);
  pending_state_ = ledger_.state();

  result.block_index = block.header.index;
  result.digest = block.digest();
  result.tx_count = block.transactions.size();
  result.attempts = chain::mining_attempts(block, 0);
  return result;
}

RegisterResult EhrService::register_identity(const std::optional<Session>& caller, const RegisterRequest& req) {
  if (req.display_name.find_first_of("\r\n") != std::string::npos) {
    throw ApiError(400, "InvalidField", "display_name must be a single line");
  }
  std::unique_lock lock(mu_);
  const policy::ChainState& st = pending_state_;
  for (const auto& [id, ident] : st.identities) {
    if (ident.display_name == req.display_name) throw ApiError(409, "NameTaken", "display_name already registered");
  }
  const KeyPair key = req.seed ? KeyPair::from_seed(*req.seed) : KeyPair::generate();
  const Digest id = chain::identity_id(key.public_key());
  if (st.find_identity(id) != nullptr) throw ApiError(409, "DuplicateIdentity", "key already registered");

  // Patients and providers sign their own registration. After the first
  // identity exists, admins are appointed by an existing admin.
  std::optional<KeyPair> admin_key;
  if (req.role == chain::Role::Admin && !st.identities.empty()) {
    if (!caller) throw ApiError(401, "Unauthorized", "registering an admin requires an admin session");
    const policy::Identity& who = require_identity(st, *caller);
    if (who.role != chain::Role::Admin) throw ApiError(403, "AdminRequired", "only admins can add admins");
    admin_key = signing_key(who.identity_id);
  }
  chain::Transaction tx = chain::Transaction::make(chain::IdentityReg{key.public_key(), req.role, req.display_name},
                                                   next_issue_ms(), admin_key ? *admin_key : key);
  {
    policy::ChainState probe = pending_state_;
    try {
      policy::apply_transaction(probe, tx, {ledger_.chain().tip().header.index + 1, 0, clock_()});
    } catch (const policy::TxRejected& e) {
      throw rejected(e);
    }
  }
  keystore_.put_identity(KeyFile{key.seed(), req.role, req.display_name});
  const TxResult t = commit(std::move(tx));
  RegisterResult r{id, t.tx_id, t.block_index, std::nullopt};
  if (!req.seed) r.generated_seed = key.seed();
  return r;
}

SubmitResult EhrService::submit_record(const Session& caller, const vault::PatientRecord& record) {
  try {
    vault::validate(record);
  } catch (const vault::VaultError& e) {
    throw ApiError(400, "InvalidRecord", e.what());
  }
  std::unique_lock lock(mu_);
  const policy::Identity& who = require_identity(pending_state_, caller);
  const std::uint64_t pid = record.patient_id;

  Digest owner;
  if (auto existing = pending_state_.owner_of(pid)) {
    const auto decision = check_access(pending_state_, who.identity_id, pid, Action::Write, "POST /api/records");
    if (!decision.allowed) throw denied(decision);
    owner = *existing;
  } else if (who.role == chain::Role::Patient) {
    owner = who.identity_id;  // first submission claims the id
  } else if (who.role == chain::Role::Admin) {
    throw ApiError(403, "AccessDenied", "admins do not author records");
  } else {
    throw ApiError(404, "UnknownPatient", "no patient has claimed this patient_id yet");
  }

  const KeyPair author = signing_key(who.identity_id);
  const aead::Key data_key = keystore_.data_key(owner);
  const vault::SealedRecord sealed =
      vault::seal_record(record, data_key, vault::synthetic_nonce(data_key, record), owner.hex());
  vault::ContentAddress address;
  try {
    address = blobs_.store_blob(sealed);
  } catch (const vault::VaultError& e) {
    throw ApiError(500, std::string(vault::to_string(e.code())), e.what());
  }
  const TxResult t = commit(vault::anchor_record(address.digest, pid, author, next_issue_ms()));
  return SubmitResult{std::string(t.block_index ? kStoredStatus : kQueuedStatus), address.digest, t.tx_id,
                      t.block_index};
}

std::vector<StoredRecord> EhrService::records(const Session& caller, std::uint64_t patient_id) {
  std::shared_lock lock(mu_);
  const policy::ChainState& st = ledger_.state();
  const policy::Identity& who = require_identity(st, caller);
  const auto decision = check_access(st, who.identity_id, patient_id, Action::Read, "GET /api/records");
  if (!decision.allowed) throw denied(decision);
  const auto owner = st.owner_of(patient_id);
  if (!owner) throw ApiError(404, "NoRecords", "no records for this patient");

  std::vector<StoredRecord> out;
  const aead::Key data_key = keystore_.data_key(*owner);
  for (const auto& block : ledger_.chain().blocks) {
    for (const auto& tx : block.transactions) {
      const auto* anchor = std::get_if<chain::RecordAnchor>(&tx.body);
      if (anchor == nullptr || anchor->patient_id != patient_id) continue;
      try {
        const vault::SealedRecord sealed = blobs_.fetch_blob({anchor->content_address});
        out.push_back(StoredRecord{vault::open_record(sealed, data_key, patient_id), anchor->content_address,
                                   block.header.index, tx.tx_id, anchor->author_id});
      } catch (const vault::VaultError& e) {
        throw ApiError(500, std::string(vault::to_string(e.code())), e.what());
      }
    }
  }
  if (out.empty()) throw ApiError(404, "NoRecords", "no records for this patient");
  return out;
}

TxResult EhrService::grant(const Session& caller, std::uint64_t patient_id, const Digest& grantee,
                           chain::Scope scope, std::optional<std::uint64_t> expires_at_ms) {
  std::unique_lock lock(mu_);
  const policy::Identity& who = require_identity(pending_state_, caller);
  const KeyPair key = signing_key(who.identity_id);
  return commit(policy::make_grant(key, patient_id, grantee, scope, expires_at_ms, next_issue_ms()));
}

TxResult EhrService::revoke(const Session& caller, std::uint64_t patient_id, const Digest& grantee) {
  std::unique_lock lock(mu_);
  const policy::Identity& who = require_identity(pending_state_, caller);
  const KeyPair key = signing_key(who.identity_id);
  return commit(policy::make_revoke(key, patient_id, grantee, next_issue_ms()));
}

TxResult EhrService::book_appointment(const Session& caller, std::uint64_t patient_id, const Digest& provider,
                                      std::uint64_t slot_ms, const std::string& note) {
  std::unique_lock lock(mu_);
  const policy::Identity& who = require_identity(pending_state_, caller);
  const KeyPair key = signing_key(who.identity_id);
  return commit(policy::make_appointment(key, patient_id, provider, slot_ms, note, next_issue_ms()));
}

std::vector<policy::AppointmentEntry> EhrService::appointments(const Session& caller) const {
  std::shared_lock lock(mu_);
  const policy::ChainState& st = ledger_.state();
  const policy::Identity& who = require_identity(st, caller);
  const std::uint64_t now = clock_();
  std::vector<policy::AppointmentEntry> out;
  for (const auto& a : st.appointments) {
    const bool visible = who.role == chain::Role::Admin || a.provider_id == who.identity_id ||
                         a.author_id == who.identity_id ||
                         policy::evaluate_access(st, who.identity_id, a.patient_id, Action::Read, now).allowed;
    if (visible) out.push_back(a);
  }
  return out;
}

std::vector<policy::Identity> EhrService::providers() const {
  std::shared_lock lock(mu_);
  std::vector<policy::Identity> out;
  for (const auto& [id, ident] : ledger_.state().identities) {
    if (ident.role == chain::Role::Provider) out.push_back(ident);
  }
  return out;
}

chain::VerificationReport EhrService::verify_persisted() const {
  std::shared_lock lock(mu_);
  try {
    return chain::verify_chain_log(config_.chain_log, config_.difficulty_bits);
  } catch (const chain::ChainLogError& e) {
    throw ApiError(500, "ChainLogUnreadable", e.what());
  }
}

AuditReport EhrService::audit(const Session& caller, std::uint64_t patient_id) {
  std::shared_lock lock(mu_);
  const policy::ChainState& st = ledger_.state();
  const policy::Identity& who = require_identity(st, caller);
  const auto decision = check_access(st, who.identity_id, patient_id, Action::Read, "GET /api/audit");
  if (!decision.allowed) throw denied(decision);
  AuditReport report;
  report.entries = policy::audit_trail(ledger_.chain(), patient_id);
  std::lock_guard access_lock(access_mu_);
  for (const auto& e : access_log_) {
    if (e.patient_id == patient_id) report.access.push_back(e);
  }
  return report;
}

std::string EhrService::state_dump() const {
  std::shared_lock lock(mu_);
  return policy::dump_state(ledger_.state());
}

chain::Chain EhrService::chain_snapshot() const {
  std::shared_lock lock(mu_);
  return ledger_.chain();
}

policy::ChainState EhrService::state_snapshot() const {
  std::shared_lock lock(mu_);
  return ledger_.state();
}

std::size_t EhrService::pending_count() const {
  std::shared_lock lock(mu_);
  return pending_.size();
}

void EhrService::corrupt_persisted_block(std::uint64_t index) {
  if (!config_.test_hooks) throw ApiError(404, "NotFound", "test hooks are disabled");
  std::unique_lock lock(mu_);
  const auto layout = chain::chain_log_layout(config_.chain_log);
  if (index == 0 || index >= layout.size()) {
    throw ApiError(400, "BadRequest", "block_index must name a committed non-genesis block");
  }
  // A block record ends with its last transaction's signature bytes.
  const auto& span = layout[index];
  std::fstream f(config_.chain_log, std::ios::in | std::ios::out | std::ios::binary);
  const auto at = static_cast<std::streamoff>(span.offset + span.length - 1);
  f.seekg(at);
  char byte = 0;
  f.get(byte);
  byte = static_cast<char>(byte ^ 0x01);
  f.seekp(at);
  f.put(byte);
  if (!f) throw ApiError(500, "IoFailure", "could not rewrite the chain log");
}

}  // namespace medledger::service
