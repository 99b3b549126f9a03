#include "medledger/service/keystore.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

namespace medledger::service {

namespace {

namespace fs = std::filesystem;

// Created with mode 0600 from the start; O_EXCL refuses to clobber.
void write_private(const fs::path& path, const std::string& content) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0600);
  if (fd < 0) throw KeyFileError("cannot create " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < content.size()) {
    const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
    if (n < 0) {
      ::close(fd);
      throw KeyFileError("write failed for " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

void make_private_dir(const fs::path& dir) {
  fs::create_directories(dir);
  fs::permissions(dir, fs::perms::owner_all, fs::perm_options::replace);
}

template <std::size_t N>
std::array<std::uint8_t, N> parse_hex_array(const std::string& hex, const fs::path& path) {
  Bytes b;
  try {
    b = from_hex(hex);
  } catch (const std::exception&) {
    throw KeyFileError(path.string() + ": bad hex");
  }
  if (b.size() != N) throw KeyFileError(path.string() + ": wrong key length");
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

}  // namespace

void write_key_file(const fs::path& path, const KeyFile& key) {
  if (key.name.find('\n') != std::string::npos) throw KeyFileError("name must be a single line");
  write_private(path, to_hex(key.seed) + "\n" + std::string(chain::to_string(key.role)) + "\n" + key.name + "\n");
}

KeyFile read_key_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw KeyFileError("cannot read " + path.string());
  std::string seed, role, name;
  if (!std::getline(in, seed) || !std::getline(in, role) || !std::getline(in, name)) {
    throw KeyFileError(path.string() + ": expected seed, role and name lines");
  }
  KeyFile key;
  key.seed = parse_hex_array<32>(seed, path);
  try {
    key.role = chain::parse_role(role);
  } catch (const std::invalid_argument&) {
    throw KeyFileError(path.string() + ": unknown role '" + role + "'");
  }
  key.name = name;
  return key;
}

Keystore::Keystore(fs::path dir) : dir_(std::move(dir)) {
  make_private_dir(dir_);
  make_private_dir(dir_ / "identities");
  make_private_dir(dir_ / "data");
}

void Keystore::put_identity(const KeyFile& key) {
  std::lock_guard lock(mu_);
  const fs::path path = dir_ / "identities" / (key.identity_id().hex() + ".key");
  if (fs::exists(path)) return;
  write_key_file(path, key);
}

std::optional<KeyFile> Keystore::identity(const Digest& id) const {
  std::lock_guard lock(mu_);
  const fs::path path = dir_ / "identities" / (id.hex() + ".key");
  if (!fs::exists(path)) return std::nullopt;
  return read_key_file(path);
}

aead::Key Keystore::data_key(const Digest& owner) {
  std::lock_guard lock(mu_);
  const fs::path path = dir_ / "data" / (owner.hex() + ".key");
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string hex;
    std::getline(in, hex);
    return parse_hex_array<32>(hex, path);
  }
  const auto key = random_array<32>();
  write_private(path, to_hex(key) + "\n");
  return key;
}

}  // namespace medledger::service
