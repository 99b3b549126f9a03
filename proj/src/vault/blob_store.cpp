#include "medledger/vault/blob_store.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace medledger::vault {

namespace {

namespace fs = std::filesystem;

constexpr const char* kManifest = "MANIFEST";

void write_atomically(const fs::path& target, ByteView data) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw VaultError(VaultErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw VaultError(VaultErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw VaultError(VaultErrorCode::IoFailure, "rename failed: " + ec.message());
}

}  // namespace

BlobStore::BlobStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw VaultError(VaultErrorCode::IoFailure, "cannot create vault dir: " + ec.message());
  std::ifstream in(dir_ / kManifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      manifest_.insert(Digest::from_hex(line));
    } catch (const std::invalid_argument&) {
      throw VaultError(VaultErrorCode::CorruptBlob, "bad MANIFEST line: " + line);
    }
  }
}

fs::path BlobStore::blob_path(const ContentAddress& addr) const { return dir_ / addr.digest.hex(); }

ContentAddress BlobStore::store_blob(const SealedRecord& sealed) {
  Bytes bytes = serialize(sealed);
  ContentAddress addr{sha256(bytes)};
  std::lock_guard lock(mu_);
  const fs::path path = blob_path(addr);
  if (!fs::exists(path)) write_atomically(path, bytes);
  if (manifest_.insert(addr.digest).second) write_manifest_locked();
  return addr;
}

SealedRecord BlobStore::fetch_blob(const ContentAddress& addr) const {
  const fs::path path = blob_path(addr);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VaultError(VaultErrorCode::NotFound, addr.digest.hex());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (sha256(bytes) != addr.digest) {
    throw VaultError(VaultErrorCode::CorruptBlob, "digest mismatch for " + addr.digest.hex());
  }
  return decode_sealed(bytes);
}

bool BlobStore::contains(const ContentAddress& addr) const {
  std::lock_guard lock(mu_);
  return manifest_.count(addr.digest) != 0;
}

std::vector<ContentAddress> BlobStore::addresses() const {
  std::lock_guard lock(mu_);
  std::vector<ContentAddress> out;
  out.reserve(manifest_.size());
  for (const auto& d : manifest_) out.push_back({d});
  return out;
}

void BlobStore::write_manifest_locked() const {
  std::string text;
  text.reserve(manifest_.size() * 65);
  for (const auto& d : manifest_) {
    text += d.hex();
    text += '\n';
  }
  write_atomically(dir_ / kManifest, as_bytes(text));
}

}  // namespace medledger::vault
