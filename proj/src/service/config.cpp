#include "medledger/service/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace medledger::service {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

// Basic TOML string: backslash escapes for quote, backslash, n and t.
std::string parse_string(std::size_t line, std::string_view v, std::string_view* rest) {
  if (v.empty() || v.front() != '"') fail(line, "expected a quoted string");
  std::string out;
  std::size_t i = 1;
  for (; i < v.size() && v[i] != '"'; ++i) {
    if (v[i] != '\\') {
      out.push_back(v[i]);
      continue;
    }
    if (++i == v.size()) break;
    switch (v[i]) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      default: fail(line, "unsupported escape");
    }
  }
  if (i >= v.size()) fail(line, "unterminated string");
  *rest = v.substr(i + 1);
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::uint64_t parse_uint(std::size_t line, const std::string& v) {
  std::string digits;
  for (char c : v) {
    if (c != '_') digits.push_back(c);
  }
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
    fail(line, "expected a non-negative integer");
  }
  return out;
}

bool parse_bool(std::size_t line, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line, "expected true or false");
}

}  // namespace

ServiceConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ServiceConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string_view rest = std::string_view(line).substr(eq + 1);
    rest = rest.substr(std::min(rest.size(), rest.find_first_not_of(" \t")));

    std::string value;
    bool quoted = false;
    if (!rest.empty() && rest.front() == '"') {
      value = parse_string(lineno, rest, &rest);
      quoted = true;
    } else {
      const auto hash = rest.find('#');
      value = trim(rest.substr(0, hash));
      rest = hash == std::string_view::npos ? std::string_view{} : rest.substr(hash);
    }
    const std::string tail = trim(rest);
    if (!tail.empty() && tail.front() != '#') fail(lineno, "unexpected text after value");

    auto need_string = [&] {
      if (!quoted) fail(lineno, key + " must be a quoted string");
    };
    auto need_bare = [&] {
      if (quoted) fail(lineno, key + " must not be quoted");
    };

    if (key == "difficulty_bits") {
      need_bare();
      const auto bits = parse_uint(lineno, value);
      if (bits > 32) fail(lineno, "difficulty_bits must be in 0..=32");
      c.difficulty_bits = static_cast<std::uint32_t>(bits);
    } else if (key == "auto_mine") {
      need_bare();
      c.auto_mine = parse_bool(lineno, value);
    } else if (key == "test_hooks") {
      need_bare();
      c.test_hooks = parse_bool(lineno, value);
    } else if (key == "session_ttl_ms") {
      need_bare();
      c.session_ttl_ms = parse_uint(lineno, value);
      if (c.session_ttl_ms == 0) fail(lineno, "session_ttl_ms must be positive");
    } else if (key == "vault_dir") {
      need_string();
      c.vault_dir = resolve(value);
    } else if (key == "chain_log") {
      need_string();
      c.chain_log = resolve(value);
    } else if (key == "keystore_dir") {
      need_string();
      c.keystore_dir = resolve(value);
    } else if (key == "webui_dir") {
      need_string();
      c.webui_dir = resolve(value);
    } else if (key == "listen_addr") {
      need_string();
      split_listen_addr(value);
      c.listen_addr = value;
    } else {
      fail(lineno, "unknown key '" + key + "'");
    }
  }
  if (base_dir.empty()) return c;
  // Defaults are relative to the config file too.
  c.vault_dir = resolve(c.vault_dir.string());
  c.chain_log = resolve(c.chain_log.string());
  c.keystore_dir = resolve(c.keystore_dir.string());
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::filesystem::absolute(path).parent_path());
}

std::optional<std::filesystem::path> config_path_from_env() {
  const char* v = std::getenv("MEDLEDGER_CONFIG");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

std::string render_config(const ServiceConfig& c) {
  std::ostringstream out;
  out << "difficulty_bits = " << c.difficulty_bits << '\n'
      << "auto_mine = " << (c.auto_mine ? "true" : "false") << '\n'
      << "vault_dir = " << quote(c.vault_dir.generic_string()) << '\n'
      << "chain_log = " << quote(c.chain_log.generic_string()) << '\n'
      << "keystore_dir = " << quote(c.keystore_dir.generic_string()) << '\n'
      << "listen_addr = " << quote(c.listen_addr) << '\n'
      << "session_ttl_ms = " << c.session_ttl_ms << '\n'
      << "test_hooks = " << (c.test_hooks ? "true" : "false") << '\n';
  if (c.webui_dir) out << "webui_dir = " << quote(c.webui_dir->generic_string()) << '\n';
  return out.str();
}

std::pair<std::string, int> split_listen_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("listen_addr must be host:port");
  int port = -1;
  const std::string p = addr.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc{} || ptr != p.data() + p.size() || port < 0 || port > 65535) {
    throw ConfigError("listen_addr port must be in 0..=65535");
  }
  return {addr.substr(0, colon), port};
}

}  // namespace medledger::service
