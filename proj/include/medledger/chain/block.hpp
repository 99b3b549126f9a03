#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "medledger/chain/transaction.hpp"

namespace medledger::chain {

constexpr std::uint32_t kMaxDifficultyBits = 32;

struct BlockHeader {
  std::uint64_t index = 0;
  Digest prev_hash;
  Digest tx_root;
  std::uint64_t timestamp_ms = 0;
  std::uint32_t difficulty_bits = 0;
  std::uint64_t nonce = 0;

  bool operator==(const BlockHeader&) const = default;
};

// Encoded header length; the nonce occupies the trailing 8 bytes.
constexpr std::size_t kHeaderSize = 8 + 32 + 32 + 8 + 4 + 8;

void encode(Writer& w, const BlockHeader& h);
BlockHeader decode_header(Reader& r);
Bytes serialize(const BlockHeader& h);
Digest header_digest(const BlockHeader& h);

Digest tx_root(std::span<const Transaction> txs);

// True iff the first `difficulty_bits` bits of `d` (big-endian) are zero.
// Throws std::invalid_argument outside 0..=32.
bool meets_difficulty(const Digest& d, std::uint32_t difficulty_bits);

struct Block {
  BlockHeader header;
  std::vector<Transaction> transactions;

  Digest digest() const { return header_digest(header); }
  bool operator==(const Block&) const = default;
};

Bytes serialize(const Block& b);
// Strict: rejects trailing bytes. Throws DecodeError.
Block decode_block(ByteView data);

BlockHeader genesis_header();
Block genesis_block();

// Blocks from genesis to tip. Values are plain data; every mutation produces a
// new Chain.
struct Chain {
  std::vector<Block> blocks;

  static Chain genesis_only() { return Chain{{genesis_block()}}; }

  std::size_t length() const { return blocks.size(); }
  const Block& tip() const { return blocks.back(); }
  Digest tip_digest() const { return tip().digest(); }
  bool operator==(const Chain&) const = default;
};

class MiningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Finds the smallest nonce >= nonce_start (wrapping modulo 2^64) whose header
// digest meets `difficulty_bits`. Throws MiningError when every nonce fails.
Block mine_block(const BlockHeader& parent, std::vector<Transaction> txs,
                 std::uint32_t difficulty_bits, std::uint64_t timestamp_ms,
                 std::uint64_t nonce_start);

// Tries at most `trials` nonces starting at `nonce_start` against `header`
// (0 means the whole 2^64 space). Returns the first nonce that meets the
// header's difficulty.
std::optional<std::uint64_t> search_nonce(const BlockHeader& header, std::uint64_t nonce_start,
                                          std::uint64_t trials);

// Nonce trials a mined block took, counting the successful one.
inline std::uint64_t mining_attempts(const Block& b, std::uint64_t nonce_start) {
  return b.header.nonce - nonce_start + 1;
}

}  // namespace medledger::chain
