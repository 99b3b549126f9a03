#pragma once

// Off-chain content-addressed blob store.
//
// Layout: <dir>/<hex digest> holds the canonical SealedRecord bytes and
// <dir>/MANIFEST lists every stored digest, one per line, sorted. Puts are
// idempotent; reads re-hash the blob and refuse anything that does not match
// its address.

#include <filesystem>
#include <mutex>
#include <set>
#include <vector>

#include "medledger/vault/record.hpp"

namespace medledger::vault {

struct ContentAddress {
  Digest digest;
  auto operator<=>(const ContentAddress&) const = default;
};

class BlobStore {
 public:
  // Creates the directory if needed and loads MANIFEST.
  explicit BlobStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  ContentAddress store_blob(const SealedRecord& sealed);
  // Throws VaultError NotFound or CorruptBlob.
  SealedRecord fetch_blob(const ContentAddress& addr) const;

  bool contains(const ContentAddress& addr) const;
  std::vector<ContentAddress> addresses() const;
  std::filesystem::path blob_path(const ContentAddress& addr) const;

 private:
  void write_manifest_locked() const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::set<Digest> manifest_;
};

}  // namespace medledger::vault
