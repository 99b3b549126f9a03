#include "medledger/chain/chain_log.hpp"

#include <fstream>
#include <iterator>

namespace medledger::chain {

namespace {

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ChainLogError("cannot open chain log: " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_record(std::ofstream& out, const Block& block) {
  Bytes payload = serialize(block);
  Writer w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  const Bytes& rec = w.data();
  out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
}

std::uint32_t read_u32(const Bytes& data, std::size_t at) {
  return (std::uint32_t{data[at]} << 24) | (std::uint32_t{data[at + 1]} << 16) |
         (std::uint32_t{data[at + 2]} << 8) | std::uint32_t{data[at + 3]};
}

void check_magic(const Bytes& data, const std::filesystem::path& path) {
  if (data.size() < kChainLogMagic.size() ||
      !std::equal(kChainLogMagic.begin(), kChainLogMagic.end(), data.begin())) {
    throw ChainLogError("bad chain log magic: " + path.string());
  }
}

}  // namespace

void write_chain_log(const std::filesystem::path& path, const Chain& chain) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ChainLogError("cannot create chain log: " + path.string());
  out.write(kChainLogMagic.data(), static_cast<std::streamsize>(kChainLogMagic.size()));
  for (const auto& b : chain.blocks) write_record(out, b);
  out.flush();
  if (!out) throw ChainLogError("write failed: " + path.string());
}

void append_to_chain_log(const std::filesystem::path& path, const Block& block) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ChainLogError("cannot open chain log for append: " + path.string());
  write_record(out, block);
  out.flush();
  if (!out) throw ChainLogError("append failed: " + path.string());
}

std::vector<LogRecordSpan> chain_log_layout(const std::filesystem::path& path) {
  Bytes data = read_file(path);
  check_magic(data, path);
  std::vector<LogRecordSpan> spans;
  std::size_t pos = kChainLogMagic.size();
  while (pos + 4 <= data.size()) {
    std::uint32_t len = read_u32(data, pos);
    if (data.size() - pos - 4 < len) break;
    spans.push_back({pos + 4, len});
    pos += 4 + len;
  }
  return spans;
}

ChainLogContents read_chain_log(const std::filesystem::path& path) {
  Bytes data = read_file(path);
  check_magic(data, path);

  ChainLogContents out;
  std::size_t pos = kChainLogMagic.size();
  std::uint64_t index = 0;
  while (pos < data.size()) {
    if (data.size() - pos < 4) {
      out.malformed_at = index;
      out.error = "truncated record length";
      break;
    }
    std::uint32_t len = read_u32(data, pos);
    pos += 4;
    if (data.size() - pos < len) {
      out.malformed_at = index;
      out.error = "truncated record";
      break;
    }
    try {
      out.chain.blocks.push_back(decode_block(ByteView(data).subspan(pos, len)));
    } catch (const DecodeError& e) {
      out.malformed_at = index;
      out.error = e.what();
      break;
    }
    pos += len;
    ++index;
  }
  return out;
}

VerificationReport verify_chain_log(const std::filesystem::path& path,
                                    std::uint32_t min_difficulty) {
  ChainLogContents contents = read_chain_log(path);
  VerificationReport report = verify_chain(contents.chain, min_difficulty);
  if (contents.malformed_at) {
    if (contents.chain.blocks.empty()) {
      report.failures.clear();
      report.ok = true;
    }
    report.add(*contents.malformed_at, FailureReason::Malformed);
  }
  return report;
}

}  // namespace medledger::chain
