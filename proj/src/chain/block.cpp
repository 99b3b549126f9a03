#include "medledger/chain/block.hpp"

#include <string>

namespace medledger::chain {

void encode(Writer& w, const BlockHeader& h) {
  w.u64(h.index);
  w.digest(h.prev_hash);
  w.digest(h.tx_root);
  w.u64(h.timestamp_ms);
  w.u32(h.difficulty_bits);
  w.u64(h.nonce);
}

BlockHeader decode_header(Reader& r) {
  BlockHeader h;
  h.index = r.u64();
  h.prev_hash = r.digest();
  h.tx_root = r.digest();
  h.timestamp_ms = r.u64();
  h.difficulty_bits = r.u32();
  h.nonce = r.u64();
  return h;
}

Bytes serialize(const BlockHeader& h) {
  Writer w;
  encode(w, h);
  return std::move(w).take();
}

Digest header_digest(const BlockHeader& h) { return sha256(serialize(h)); }

Digest tx_root(std::span<const Transaction> txs) { return sha256(serialize(txs)); }

bool meets_difficulty(const Digest& d, std::uint32_t difficulty_bits) {
  if (difficulty_bits > kMaxDifficultyBits) {
    throw std::invalid_argument("difficulty_bits must be in 0..=32, got " +
                                std::to_string(difficulty_bits));
  }
  std::uint32_t full_bytes = difficulty_bits / 8;
  for (std::uint32_t i = 0; i < full_bytes; ++i) {
    if (d.bytes[i] != 0) return false;
  }
  std::uint32_t rest = difficulty_bits % 8;
  if (rest == 0) return true;
  auto mask = static_cast<std::uint8_t>(0xff << (8 - rest));
  return (d.bytes[full_bytes] & mask) == 0;
}

Bytes serialize(const Block& b) {
  Writer w;
  encode(w, b.header);
  w.u32(static_cast<std::uint32_t>(b.transactions.size()));
  for (const auto& tx : b.transactions) encode(w, tx);
  return std::move(w).take();
}

Block decode_block(ByteView data) {
  Reader r(data);
  Block b;
  b.header = decode_header(r);
  std::uint32_t count = r.u32();
  // Each transaction needs well over 64 bytes; bound the reserve by input size.
  b.transactions.reserve(std::min<std::size_t>(count, r.remaining() / 64));
  for (std::uint32_t i = 0; i < count; ++i) b.transactions.push_back(decode_transaction(r));
  r.expect_end();
  return b;
}

BlockHeader genesis_header() {
  BlockHeader h;
  h.index = 0;
  h.prev_hash = Digest::zero();
  h.tx_root = tx_root({});
  h.timestamp_ms = 0;
  h.difficulty_bits = 0;
  h.nonce = 0;
  return h;
}

Block genesis_block() { return Block{genesis_header(), {}}; }

Block mine_block(const BlockHeader& parent, std::vector<Transaction> txs,
                 std::uint32_t difficulty_bits, std::uint64_t timestamp_ms,
                 std::uint64_t nonce_start) {
  if (difficulty_bits > kMaxDifficultyBits) {
    throw std::invalid_argument("difficulty_bits must be in 0..=32");
  }
  Block block;
  block.header.index = parent.index + 1;
  block.header.prev_hash = header_digest(parent);
  block.header.tx_root = tx_root(txs);
  block.header.timestamp_ms = timestamp_ms;
  block.header.difficulty_bits = difficulty_bits;
  block.header.nonce = nonce_start;
  block.transactions = std::move(txs);

  if (auto nonce = search_nonce(block.header, nonce_start, 0)) {
    block.header.nonce = *nonce;
    return block;
  }
  throw MiningError("nonce space exhausted");
}

std::optional<std::uint64_t> search_nonce(const BlockHeader& header, std::uint64_t nonce_start,
                                          std::uint64_t trials) {
  if (header.difficulty_bits > kMaxDifficultyBits) {
    throw std::invalid_argument("difficulty_bits must be in 0..=32");
  }
  // Encode once and rewrite only the trailing nonce on each attempt.
  Bytes encoded = serialize(header);
  const std::size_t nonce_at = encoded.size() - 8;
  std::uint64_t nonce = nonce_start;
  std::uint64_t tried = 0;
  do {
    for (int i = 0; i < 8; ++i) {
      encoded[nonce_at + static_cast<std::size_t>(i)] =
          static_cast<std::uint8_t>(nonce >> (56 - 8 * i));
    }
    if (meets_difficulty(sha256(encoded), header.difficulty_bits)) return nonce;
    ++nonce;
    ++tried;
  } while (nonce != nonce_start && tried != trials);
  return std::nullopt;
}

}  // namespace medledger::chain
