#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "medledger/chain/transaction.hpp"
#include "medledger/crypto.hpp"

namespace medledger::service {

// Three-line text file: seed hex, role, display name.
struct KeyFile {
  Seed seed{};
  chain::Role role = chain::Role::Patient;
  std::string name;

  KeyPair key_pair() const { return KeyPair::from_seed(seed); }
  Digest identity_id() const { return chain::identity_id(key_pair().public_key()); }
};

class KeyFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Written with owner-only permissions. Refuses to overwrite.
void write_key_file(const std::filesystem::path& path, const KeyFile& key);
KeyFile read_key_file(const std::filesystem::path& path);

// Custodial store the service signs with. Layout:
//   <dir>/identities/<identity hex>.key   KeyFile
//   <dir>/data/<owner identity hex>.key   AES-256 data key, hex
// Each owner's records are sealed under that owner's data key.
class Keystore {
 public:
  explicit Keystore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  void put_identity(const KeyFile& key);
  std::optional<KeyFile> identity(const Digest& id) const;

  // Creates and persists a fresh key on first use.
  aead::Key data_key(const Digest& owner);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

}  // namespace medledger::service
