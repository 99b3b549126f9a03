#pragma once

// Append-only chain persistence: the magic "MLG1" followed by one record per
// block, each a u32 big-endian length and the block's canonical bytes.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "medledger/chain/chain.hpp"

namespace medledger::chain {

inline constexpr std::string_view kChainLogMagic = "MLG1";

class ChainLogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Overwrites `path` with the whole chain.
void write_chain_log(const std::filesystem::path& path, const Chain& chain);
// Appends one record and flushes.
void append_to_chain_log(const std::filesystem::path& path, const Block& block);

struct ChainLogContents {
  Chain chain;
  // Set when a record could not be framed or decoded; `chain` then holds the
  // blocks before it.
  std::optional<std::uint64_t> malformed_at;
  std::string error;
};

// Throws ChainLogError if the file is missing or has a bad magic.
ChainLogContents read_chain_log(const std::filesystem::path& path);

// Reads and verifies in one step; undecodable records are reported as
// Malformed at their index.
VerificationReport verify_chain_log(const std::filesystem::path& path,
                                    std::uint32_t min_difficulty = 0);

// Byte offset and length of each block record's payload, in order.
struct LogRecordSpan {
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
};
std::vector<LogRecordSpan> chain_log_layout(const std::filesystem::path& path);

}  // namespace medledger::chain
