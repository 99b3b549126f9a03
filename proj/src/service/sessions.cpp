#include "medledger/service/sessions.hpp"

#include <chrono>

namespace medledger::service {

Clock system_clock() {
  return [] {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
  };
}

Bytes login_message(const std::array<std::uint8_t, 32>& challenge) {
  Bytes msg;
  msg.reserve(kLoginDomain.size() + challenge.size());
  for (char c : kLoginDomain) msg.push_back(static_cast<std::uint8_t>(c));
  for (std::uint8_t b : challenge) msg.push_back(b);
  return msg;
}

SessionStore::SessionStore(std::uint64_t ttl_ms, Clock clock) : ttl_ms_(ttl_ms), clock_(std::move(clock)) {}

Challenge SessionStore::issue_challenge() {
  Challenge c{random_array<32>(), clock_() + kChallengeTtlMs};
  std::lock_guard lock(mu_);
  const std::uint64_t now = clock_();
  std::erase_if(challenges_, [&](const auto& kv) { return kv.second <= now; });
  challenges_[c.nonce] = c.expires_at_ms;
  return c;
}

bool SessionStore::consume_challenge(const std::array<std::uint8_t, 32>& nonce) {
  std::lock_guard lock(mu_);
  auto it = challenges_.find(nonce);
  if (it == challenges_.end()) return false;
  const bool fresh = clock_() < it->second;
  challenges_.erase(it);
  return fresh;
}

Session SessionStore::create(const Digest& identity_id) {
  Session s{to_hex(random_array<32>()), identity_id, clock_(), ttl_ms_};
  std::lock_guard lock(mu_);
  sessions_[s.token] = s;
  return s;
}

std::variant<Session, SessionError> SessionStore::resolve(const std::string& token) const {
  if (token.empty()) return SessionError::Missing;
  std::lock_guard lock(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return SessionError::BadToken;
  if (clock_() >= it->second.issued_at_ms + it->second.ttl_ms) return SessionError::TokenExpired;
  return it->second;
}

}  // namespace medledger::service
