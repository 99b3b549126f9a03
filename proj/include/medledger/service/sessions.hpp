#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "medledger/crypto.hpp"

namespace medledger::service {

// Epoch milliseconds. Injected so tests can move time.
using Clock = std::function<std::uint64_t()>;
Clock system_clock();

struct Session {
  std::string token;
  Digest identity_id;
  std::uint64_t issued_at_ms = 0;
  std::uint64_t ttl_ms = 0;
};

struct Challenge {
  std::array<std::uint8_t, 32> nonce{};
  std::uint64_t expires_at_ms = 0;
};

// Login signatures cover this prefix followed by the raw challenge bytes, so
// a challenge signature can never double as a transaction signature.
constexpr std::string_view kLoginDomain = "medledger-login-v1";
Bytes login_message(const std::array<std::uint8_t, 32>& challenge);

enum class SessionError { Missing, BadToken, TokenExpired };

class SessionStore {
 public:
  static constexpr std::uint64_t kChallengeTtlMs = 5 * 60 * 1000;

  SessionStore(std::uint64_t ttl_ms, Clock clock);

  Challenge issue_challenge();
  // Single use: true at most once per issued, unexpired challenge.
  bool consume_challenge(const std::array<std::uint8_t, 32>& nonce);

  Session create(const Digest& identity_id);
  // Returns the session or the reason the token is unusable.
  std::variant<Session, SessionError> resolve(const std::string& token) const;

 private:
  std::uint64_t ttl_ms_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::map<std::array<std::uint8_t, 32>, std::uint64_t> challenges_;
};

}  // namespace medledger::service
