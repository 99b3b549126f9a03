#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medledger/chain/chain.hpp"
#include "medledger/policy/access.hpp"
#include "medledger/service/config.hpp"
#include "medledger/service/keystore.hpp"
#include "medledger/service/sessions.hpp"
#include "medledger/vault/blob_store.hpp"

namespace medledger::service {

// UI contract: the dashboard shows this string verbatim.
inline constexpr std::string_view kStoredStatus = "Data Successfully stored into Block chain";
inline constexpr std::string_view kQueuedStatus = "Queued for mining";

// Maps to an HTTP status plus a stable machine-readable code.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, std::string message);
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

// Refuses to start: the persisted log does not replay.
class StartupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegisterRequest {
  std::string display_name;
  chain::Role role = chain::Role::Patient;
  // Import an existing key (from `medledger keygen`); generated when absent.
  std::optional<Seed> seed;
};

struct RegisterResult {
  Digest identity_id;
  Digest tx_id;
  std::optional<std::uint64_t> block_index;
  // Returned once when the service generated the key.
  std::optional<Seed> generated_seed;
};

struct TxResult {
  Digest tx_id;
  // Set when the transaction is already in a block.
  std::optional<std::uint64_t> block_index;
};

struct SubmitResult {
  std::string status;
  Digest content_address;
  Digest tx_id;
  std::optional<std::uint64_t> block_index;
};

struct StoredRecord {
  vault::PatientRecord record;
  Digest content_address;
  std::uint64_t block_index = 0;
  Digest tx_id;
  Digest author_id;
};

struct MineResult {
  std::uint64_t block_index = 0;
  Digest digest;
  std::size_t tx_count = 0;
  std::uint64_t attempts = 0;
  // Pending transactions that no longer applied at mining time.
  std::vector<Digest> dropped;
};

struct AccessLogEntry {
  std::uint64_t at_ms = 0;
  Digest requester;
  std::uint64_t patient_id = 0;
  policy::Action action = policy::Action::Read;
  policy::AccessDecision decision;
  std::string endpoint;
};

struct AuditReport {
  std::vector<policy::AuditEntry> entries;
  std::vector<AccessLogEntry> access;
};

// The service core: HTTP handlers are thin wrappers around these calls.
// Mutations run one at a time under the writer lock; reads share it.
class EhrService {
 public:
  // Replays the chain log (creating a genesis log if missing). Throws
  // StartupError when the log does not verify.
  explicit EhrService(ServiceConfig config, Clock clock = system_clock());

  const ServiceConfig& config() const { return config_; }

  Challenge challenge();
  // `user` is an identity id (hex) or a unique display name.
  Session login(const std::string& user, const std::string& challenge_hex,
                const std::string& signature_hex);
  // Throws ApiError 401.
  Session authenticate(const std::string& token) const;
  policy::Identity identity_of(const Session& session) const;

  RegisterResult register_identity(const std::optional<Session>& caller, const RegisterRequest& req);

  SubmitResult submit_record(const Session& caller, const vault::PatientRecord& record);
  std::vector<StoredRecord> records(const Session& caller, std::uint64_t patient_id);

  TxResult grant(const Session& caller, std::uint64_t patient_id, const Digest& grantee, chain::Scope scope,
                 std::optional<std::uint64_t> expires_at_ms);
  TxResult revoke(const Session& caller, std::uint64_t patient_id, const Digest& grantee);
  TxResult book_appointment(const Session& caller, std::uint64_t patient_id, const Digest& provider,
                            std::uint64_t slot_ms, const std::string& note);
  std::vector<policy::AppointmentEntry> appointments(const Session& caller) const;
  std::vector<policy::Identity> providers() const;

  // Throws ApiError 409 NothingToMine when the pool is empty.
  MineResult mine();

  // Re-reads the persisted log, so on-disk tampering shows up.
  chain::VerificationReport verify_persisted() const;

  AuditReport audit(const Session& caller, std::uint64_t patient_id);

  std::string state_dump() const;
  chain::Chain chain_snapshot() const;
  policy::ChainState state_snapshot() const;
  std::size_t pending_count() const;

  // Test hook: flips the last signature byte of block `index` in the log file
  // only. Throws ApiError 404 unless test_hooks is on.
  void corrupt_persisted_block(std::uint64_t index);

 private:
  const policy::Identity& require_identity(const policy::ChainState& state, const Session& s) const;
  KeyPair signing_key(const Digest& identity) const;
  std::uint64_t next_issue_ms();
  TxResult commit(chain::Transaction tx);
  MineResult mine_locked();
  policy::AccessDecision check_access(const policy::ChainState& state, const Digest& requester,
                                      std::uint64_t patient_id, policy::Action action, std::string endpoint);
  void load_access_log();

  ServiceConfig config_;
  Clock clock_;
  vault::BlobStore blobs_;
  Keystore keystore_;
  SessionStore sessions_;

  mutable std::shared_mutex mu_;
  chain::Ledger ledger_;
  std::vector<chain::Transaction> pending_;
  policy::ChainState pending_state_;
  std::uint64_t last_issue_ms_ = 0;

  std::mutex access_mu_;
  std::vector<AccessLogEntry> access_log_;
  std::filesystem::path access_log_path_;
};

}  // namespace medledger::service
