#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace medledger::service {

struct ServiceConfig {
  std::uint32_t difficulty_bits = 12;
  bool auto_mine = true;
  std::filesystem::path vault_dir = "vault";
  std::filesystem::path chain_log = "chain.log";
  std::filesystem::path keystore_dir = "keys";
  std::string listen_addr = "127.0.0.1:8080";
  std::uint64_t session_ttl_ms = 3'600'000;
  // Enables POST /api/test/corrupt. Never set in a real deployment.
  bool test_hooks = false;
  std::optional<std::filesystem::path> webui_dir;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` lines in TOML syntax: quoted strings, integers, booleans
// and `#` comments. Relative paths resolve against `base_dir`. Unknown keys
// are an error so typos do not silently fall back to defaults.
ServiceConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ServiceConfig load_config(const std::filesystem::path& path);
// Reads the file named by MEDLEDGER_CONFIG, if set.
std::optional<std::filesystem::path> config_path_from_env();

std::string render_config(const ServiceConfig& config);

// "host:port"; throws ConfigError.
std::pair<std::string, int> split_listen_addr(const std::string& addr);

}  // namespace medledger::service
