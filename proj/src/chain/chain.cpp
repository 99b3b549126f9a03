#include "medledger/chain/chain.hpp"

#include <algorithm>

namespace medledger::chain {

namespace {

bool pow_ok(const BlockHeader& h, std::uint32_t min_difficulty) {
  if (h.difficulty_bits > kMaxDifficultyBits || h.difficulty_bits < min_difficulty) return false;
  return meets_difficulty(header_digest(h), h.difficulty_bits);
}

}  // namespace

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::BadLink: return "BadLink";
    case FailureReason::BadTxRoot: return "BadTxRoot";
    case FailureReason::BadPoW: return "BadPoW";
    case FailureReason::BadSignature: return "BadSignature";
    case FailureReason::BadIndex: return "BadIndex";
    case FailureReason::BadGenesis: return "BadGenesis";
    case FailureReason::Malformed: return "Malformed";
  }
  return "Unknown";
}

void VerificationReport::add(std::uint64_t index, FailureReason reason) {
  failures.push_back({index, reason});
  ok = false;
}

bool VerificationReport::flags(std::uint64_t index, FailureReason reason) const {
  return std::find(failures.begin(), failures.end(), VerificationFailure{index, reason}) !=
         failures.end();
}

bool VerificationReport::flags_at_or_after(std::uint64_t index) const {
  return std::any_of(failures.begin(), failures.end(),
                     [&](const VerificationFailure& f) { return f.block_index >= index; });
}

VerificationReport verify_chain(const Chain& chain, std::uint32_t min_difficulty) {
  VerificationReport report;
  if (chain.blocks.empty()) {
    report.add(0, FailureReason::BadGenesis);
    return report;
  }
  const Block& genesis = chain.blocks.front();
  if (genesis.header != genesis_header() || !genesis.transactions.empty()) {
    report.add(0, FailureReason::BadGenesis);
  }

  Digest parent_digest = genesis.digest();
  for (std::size_t i = 1; i < chain.blocks.size(); ++i) {
    const Block& b = chain.blocks[i];
    const Digest digest = b.digest();
    if (b.header.index != i) report.add(i, FailureReason::BadIndex);
    if (b.header.prev_hash != parent_digest) report.add(i, FailureReason::BadLink);
    if (b.transactions.empty() || b.header.tx_root != tx_root(b.transactions)) {
      report.add(i, FailureReason::BadTxRoot);
    }
    if (!pow_ok(b.header, min_difficulty)) report.add(i, FailureReason::BadPoW);
    if (std::any_of(b.transactions.begin(), b.transactions.end(),
                    [](const Transaction& tx) { return !verify_transaction(tx); })) {
      report.add(i, FailureReason::BadSignature);
    }
    parent_digest = digest;
  }
  return report;
}

std::string_view to_string(AppendErrorCode code) {
  switch (code) {
    case AppendErrorCode::RejectBadLink: return "RejectBadLink";
    case AppendErrorCode::RejectBadPoW: return "RejectBadPoW";
    case AppendErrorCode::RejectBadTx: return "RejectBadTx";
    case AppendErrorCode::RejectStaleParent: return "RejectStaleParent";
  }
  return "Unknown";
}

AppendError::AppendError(AppendErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

policy::ChainState validate_block(const Chain& chain, const policy::ChainState& state,
                                  const Block& block, std::uint32_t min_difficulty) {
  const Block& tip = chain.tip();
  const Digest tip_digest = tip.digest();
  if (block.header.prev_hash != tip_digest) {
    const bool stale = std::any_of(chain.blocks.begin(), chain.blocks.end() - 1,
                                   [&](const Block& b) { return b.digest() == block.header.prev_hash; });
    if (stale) throw AppendError(AppendErrorCode::RejectStaleParent, "parent is not the tip");
    throw AppendError(AppendErrorCode::RejectBadLink, "prev_hash does not match tip");
  }
  if (block.header.index != tip.header.index + 1) {
    throw AppendError(AppendErrorCode::RejectBadLink, "index is not parent index + 1");
  }
  if (!pow_ok(block.header, min_difficulty)) {
    throw AppendError(AppendErrorCode::RejectBadPoW, "header digest misses difficulty");
  }
  if (block.transactions.empty()) {
    throw AppendError(AppendErrorCode::RejectBadTx, "empty transaction list");
  }
  if (block.header.tx_root != tx_root(block.transactions)) {
    throw AppendError(AppendErrorCode::RejectBadTx, "tx_root mismatch");
  }

  policy::ChainState next = state;
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    try {
      policy::apply_transaction(next, block.transactions[i],
                                policy::TxContext{block.header.index, static_cast<std::uint32_t>(i),
                                                  block.header.timestamp_ms});
    } catch (const policy::TxRejected& e) {
      throw AppendError(AppendErrorCode::RejectBadTx,
                        "tx " + std::to_string(i) + " " + std::string(policy::to_string(e.reason())));
    }
  }
  return next;
}

Chain append_block(const Chain& chain, const Block& block, std::uint32_t min_difficulty) {
  validate_block(chain, policy::materialize(chain), block, min_difficulty);
  Chain out = chain;
  out.blocks.push_back(block);
  return out;
}

ForkChoiceError::ForkChoiceError(ForkChoiceErrorCode code)
    : std::runtime_error(code == ForkChoiceErrorCode::NoCandidates ? "NoCandidates"
                                                                   : "MixedGenesis"),
      code_(code) {}

std::size_t fork_choice_index(std::span<const Chain> candidates) {
  if (candidates.empty()) throw ForkChoiceError(ForkChoiceErrorCode::NoCandidates);
  for (const auto& c : candidates) {
    if (c.blocks.empty() || c.blocks.front() != candidates.front().blocks.front()) {
      throw ForkChoiceError(ForkChoiceErrorCode::MixedGenesis);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (fork_choice_prefers(candidates[i], candidates[best])) best = i;
  }
  return best;
}

bool fork_choice_prefers(const Chain& challenger, const Chain& incumbent) {
  if (challenger.length() != incumbent.length()) return challenger.length() > incumbent.length();
  return challenger.tip_digest() < incumbent.tip_digest();
}

Chain fork_choice(std::span<const Chain> candidates) {
  return candidates[fork_choice_index(candidates)];
}

Ledger::Ledger(std::uint32_t min_difficulty)
    : chain_(Chain::genesis_only()), min_difficulty_(min_difficulty) {}

Ledger Ledger::replay(const Chain& chain, std::uint32_t min_difficulty) {
  Ledger ledger(min_difficulty);
  if (chain.blocks.empty() || chain.blocks.front() != genesis_block()) {
    throw AppendError(AppendErrorCode::RejectBadLink, "chain does not start at genesis");
  }
  for (std::size_t i = 1; i < chain.blocks.size(); ++i) ledger.append(chain.blocks[i]);
  return ledger;
}

void Ledger::append(const Block& block) {
  policy::ChainState next = validate_block(chain_, state_, block, min_difficulty_);
  chain_.blocks.push_back(block);
  state_ = std::move(next);
}

}  // namespace medledger::chain
