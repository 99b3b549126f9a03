#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medledger/chain/block.hpp"
#include "medledger/policy/state.hpp"

namespace medledger::chain {

enum class FailureReason {
  BadLink,
  BadTxRoot,
  BadPoW,
  BadSignature,
  BadIndex,
  BadGenesis,
  // Only produced when reading a persisted log whose record does not decode.
  Malformed,
};

std::string_view to_string(FailureReason reason);

struct VerificationFailure {
  std::uint64_t block_index = 0;
  FailureReason reason = FailureReason::BadLink;
  bool operator==(const VerificationFailure&) const = default;
};

struct VerificationReport {
  bool ok = true;
  std::vector<VerificationFailure> failures;

  void add(std::uint64_t index, FailureReason reason);
  bool flags(std::uint64_t index, FailureReason reason) const;
  // True if any failure sits at `index` or later.
  bool flags_at_or_after(std::uint64_t index) const;
};

// Checks genesis constants, index sequence, prev_hash linkage, tx_root, PoW at
// each header's recorded difficulty (and at least `min_difficulty`), and every
// transaction's id and signature. Collects every failure. A non-genesis block
// with no transactions is reported as BadTxRoot.
VerificationReport verify_chain(const Chain& chain, std::uint32_t min_difficulty = 0);

enum class AppendErrorCode { RejectBadLink, RejectBadPoW, RejectBadTx, RejectStaleParent };

std::string_view to_string(AppendErrorCode code);

class AppendError : public std::runtime_error {
 public:
  AppendError(AppendErrorCode code, std::string detail);
  AppendErrorCode code() const { return code_; }

 private:
  AppendErrorCode code_;
};

// Returns `state` advanced past `block` if the block extends `chain`; throws
// AppendError otherwise. `state` must be the materialized state of `chain`.
policy::ChainState validate_block(const Chain& chain, const policy::ChainState& state,
                                  const Block& block, std::uint32_t min_difficulty = 0);

// Returns a new chain one block longer; `chain` is not modified.
Chain append_block(const Chain& chain, const Block& block, std::uint32_t min_difficulty = 0);

enum class ForkChoiceErrorCode { NoCandidates, MixedGenesis };

class ForkChoiceError : public std::runtime_error {
 public:
  explicit ForkChoiceError(ForkChoiceErrorCode code);
  ForkChoiceErrorCode code() const { return code_; }

 private:
  ForkChoiceErrorCode code_;
};

// Longest chain wins; ties go to the lexicographically smallest tip digest.
std::size_t fork_choice_index(std::span<const Chain> candidates);
Chain fork_choice(std::span<const Chain> candidates);
// The same rule for two chains already known to share a genesis: true iff
// `challenger` strictly beats `incumbent`.
bool fork_choice_prefers(const Chain& challenger, const Chain& incumbent);

// Chain plus its materialized state, kept in step. Single writer: callers
// serialize calls to append().
class Ledger {
 public:
  explicit Ledger(std::uint32_t min_difficulty = 0);

  // Rebuilds state by validating every block of `chain` in order. Throws
  // AppendError if any block is not acceptable.
  static Ledger replay(const Chain& chain, std::uint32_t min_difficulty = 0);

  const Chain& chain() const { return chain_; }
  const policy::ChainState& state() const { return state_; }
  std::uint32_t min_difficulty() const { return min_difficulty_; }

  // Strong guarantee: on AppendError nothing changes.
  void append(const Block& block);

 private:
  Chain chain_;
  policy::ChainState state_;
  std::uint32_t min_difficulty_;
};

}  // namespace medledger::chain
