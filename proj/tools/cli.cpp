#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "medledger/bench/bench.hpp"
#include "medledger/chain/chain_log.hpp"
#include "medledger/service/http.hpp"
#include "medledger/service/service.hpp"
#include "medledger/sim/scenario.hpp"
#include "medledger/vault/blob_store.hpp"

namespace medledger::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kConfigName = "medledger.toml";

// A failure with an exit code and a stable error name for the first word of
// the message.
struct Failure {
  int exit_code;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(int exit_code, std::string code, std::string message) {
  throw Failure{exit_code, std::move(code), std::move(message)};
}

fs::path resolve_config(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (auto env = service::config_path_from_env()) return *env;
  if (fs::exists(kConfigName)) return kConfigName;
  fail(kExitUsage, "NoConfig", "pass --config or set MEDLEDGER_CONFIG");
}

service::ServiceConfig load(const std::string& flag) {
  const fs::path path = resolve_config(flag);
  try {
    return service::load_config(path);
  } catch (const service::ConfigError& e) {
    fail(kExitUsage, "ConfigError", e.what());
  }
}

// ---- init ----------------------------------------------------------------

int cmd_init(const fs::path& dir, std::uint32_t difficulty, std::ostream& out) {
  if (fs::exists(dir / kConfigName) || fs::exists(dir / "chain.log")) {
    fail(kExitUsage, "AlreadyInitialized", dir.string() + " already holds a deployment");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(kExitUsage, "IoFailure", ec.message());

  service::ServiceConfig cfg;
  cfg.difficulty_bits = difficulty;
  std::ofstream(dir / kConfigName) << service::render_config(cfg);
  chain::write_chain_log(dir / cfg.chain_log, chain::Chain::genesis_only());
  vault::BlobStore store(dir / cfg.vault_dir);
  service::Keystore keys(dir / cfg.keystore_dir);
  out << "initialized " << dir.string() << " difficulty=" << difficulty
      << " genesis=" << chain::genesis_block().digest().hex() << '\n';
  return kExitOk;
}

// ---- keygen --------------------------------------------------------------

int cmd_keygen(const std::string& role, const std::string& name, std::string out_path, std::ostream& out) {
  if (name.empty() || name.find('\n') != std::string::npos) {
    fail(kExitUsage, "InvalidField", "name must be one non-empty line");
  }
  service::KeyFile kf;
  kf.seed = random_array<32>();
  kf.role = chain::parse_role(role);
  kf.name = name;
  if (out_path.empty()) out_path = name + ".key";
  try {
    service::write_key_file(out_path, kf);
  } catch (const service::KeyFileError& e) {
    fail(kExitUsage, "IoFailure", e.what());
  }
  out << kf.identity_id().hex() << '\n';
  return kExitOk;
}

// ---- register ------------------------------------------------------------

service::KeyFile read_key(const std::string& path) {
  try {
    return service::read_key_file(path);
  } catch (const service::KeyFileError& e) {
    fail(kExitUsage, "IoFailure", e.what());
  }
}

json remote_call(httplib::Client& client, const std::string& method, const std::string& path,
                 const json& body, const std::string& token) {
  httplib::Headers h;
  if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
  auto r = method == "GET" ? client.Get(path, h) : client.Post(path, h, body.dump(), "application/json");
  if (!r) fail(kExitUsage, "ServiceUnreachable", httplib::to_string(r.error()));
  json j = json::parse(r->body, nullptr, false);
  if (r->status != 200 && r->status != 202) {
    const std::string code = j.is_object() ? j.value("code", "HttpError") : "HttpError";
    const std::string msg = j.is_object() ? j.value("message", "") : r->body;
    fail(kExitFailed, code, msg);
  }
  return j;
}

std::string remote_login(httplib::Client& client, const service::KeyFile& kf) {
  const json ch = remote_call(client, "GET", "/api/challenge", nullptr, "");
  const Bytes raw = from_hex(ch.at("challenge").get<std::string>());
  std::array<std::uint8_t, 32> nonce{};
  if (raw.size() != nonce.size()) fail(kExitFailed, "BadChallenge", "unexpected challenge length");
  std::copy(raw.begin(), raw.end(), nonce.begin());
  const json s = remote_call(client, "POST", "/api/login",
                             {{"username", kf.identity_id().hex()},
                              {"challenge", ch.at("challenge")},
                              {"signature", to_hex(kf.key_pair().sign(service::login_message(nonce)))}},
                             "");
  return s.at("token").get<std::string>();
}

int cmd_register(const std::string& key_path, const std::string& as_path, const std::string& url,
                 const std::string& config_flag, std::ostream& out) {
  const service::KeyFile kf = read_key(key_path);
  const json body{{"display_name", kf.name}, {"role", chain::to_string(kf.role)}, {"seed", to_hex(kf.seed)}};

  if (!url.empty()) {
    httplib::Client client(url);
    client.set_connection_timeout(5);
    const std::string token = as_path.empty() ? "" : remote_login(client, read_key(as_path));
    json r = remote_call(client, "POST", "/api/identities", body, token);
    if (!r.value("committed", false)) {
      remote_call(client, "POST", "/api/mine", nullptr, token);
      r["committed"] = true;
    }
    out << "identity_id=" << r.at("identity_id").get<std::string>() << " tx_id=" << r.at("tx_id").get<std::string>()
        << '\n';
    return kExitOk;
  }

  // Embedded: open the deployment directly. Its pending pool does not outlive
  // this process, so the registration is mined before returning.
  service::EhrService svc(load(config_flag));
  std::optional<service::Session> caller;
  if (!as_path.empty()) {
    const service::KeyFile as = read_key(as_path);
    const service::Challenge c = svc.challenge();
    caller = svc.login(as.identity_id().hex(), to_hex(c.nonce),
                       to_hex(as.key_pair().sign(service::login_message(c.nonce))));
  }
  service::RegisterResult r = svc.register_identity(caller, {kf.name, kf.role, kf.seed});
  if (!r.block_index) r.block_index = svc.mine().block_index;
  out << "identity_id=" << r.identity_id.hex() << " tx_id=" << r.tx_id.hex() << " block=" << *r.block_index << '\n';
  return kExitOk;
}

// ---- serve ---------------------------------------------------------------

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

int cmd_serve(const std::string& config_flag, std::ostream& out) {
  const service::ServiceConfig cfg = load(config_flag);
  const auto [host, port] = service::split_listen_addr(cfg.listen_addr);
  service::EhrService svc(cfg);
  service::HttpServer http(svc);
  const int bound = http.bind(host, port);
  if (bound < 0) fail(kExitUsage, "IoFailure", "cannot listen on " + cfg.listen_addr);

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&http] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    http.stop();
  });
  out << "listening on http://" << host << ':' << bound << " difficulty=" << cfg.difficulty_bits
      << " auto_mine=" << (cfg.auto_mine ? "true" : "false") << std::endl;
  http.serve();
  g_stop = true;
  watcher.join();
  return kExitOk;
}

// ---- verify --------------------------------------------------------------

int cmd_verify(const fs::path& chain_path, std::uint32_t min_difficulty, std::ostream& out) {
  if (!fs::is_regular_file(chain_path)) fail(kExitUsage, "IoFailure", "no such file: " + chain_path.string());
  std::size_t length = 0;
  chain::VerificationReport report;
  try {
    length = chain::read_chain_log(chain_path).chain.length();
    report = chain::verify_chain_log(chain_path, min_difficulty);
  } catch (const chain::ChainLogError& e) {
    out << "FAIL length=0\nblock 0: Malformed (" << e.what() << ")\n";
    return kExitFailed;
  }
  out << (report.ok ? "ok" : "FAIL") << " length=" << length << '\n';
  for (const auto& f : report.failures) out << "block " << f.block_index << ": " << chain::to_string(f.reason) << '\n';
  return report.ok ? kExitOk : kExitFailed;
}

// ---- sim -----------------------------------------------------------------

int cmd_sim(const fs::path& scenario_path, std::optional<std::uint64_t> seed, const std::string& csv_path,
            std::uint64_t max_ticks, std::ostream& out, std::ostream& err) {
  sim::Scenario sc;
  try {
    sc = sim::load_scenario(scenario_path);
  } catch (const sim::ScenarioError& e) {
    fail(kExitUsage, "ScenarioError", scenario_path.string() + ": " + e.what());
  }
  if (seed) sc.config.rng_seed = *seed;

  sim::SimWorld world(sc.config, sc.script);
  bool settled = true;
  try {
    world.run_until_quiescent(max_ticks);
  } catch (const sim::SimError&) {
    settled = false;
  }

  std::ostringstream csv;
  sim::write_csv(csv, world.log());
  if (csv_path.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(csv_path, std::ios::binary);
    f << csv.str();
    if (!f) fail(kExitUsage, "IoFailure", "cannot write " + csv_path);
  }

  const bool converged = settled && world.converged();
  std::size_t reorgs = 0;
  for (const auto& e : world.log()) reorgs += e.kind == sim::EventKind::Reorged;
  const chain::Chain& c = world.node(0).ledger.chain();
  std::ostream& summary = csv_path.empty() ? err : out;
  summary << "converged=" << (converged ? "true" : "false") << " ticks=" << world.tick()
          << " height=" << c.length() - 1 << " tip=" << c.tip_digest().hex() << " events=" << world.log().size()
          << " reorgs=" << reorgs << '\n';
  return converged ? kExitOk : kExitFailed;
}

// ---- bench ---------------------------------------------------------------

int cmd_bench(const bench::BenchOptions& opts, const std::string& out_path, std::ostream& out) {
  bench::BenchReport report;
  try {
    report = bench::run_bench(opts);
  } catch (const bench::BenchError& e) {
    const char* code = e.code() == bench::BenchErrorCode::ServiceUnreachable ? "ServiceUnreachable"
                       : e.code() == bench::BenchErrorCode::BadArgument ? "BadArgument"
                                                                         : "RequestFailed";
    fail(e.code() == bench::BenchErrorCode::RequestFailed ? kExitFailed : kExitUsage, code, e.what());
  }
  if (out_path.empty()) {
    bench::write_csv(out, report);
  } else {
    std::ofstream f(out_path);
    bench::write_csv(f, report);
    if (!f) fail(kExitUsage, "IoFailure", "cannot write " + out_path);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"medledger: blockchain-anchored health records"};
  app.require_subcommand(1);

  auto* init = app.add_subcommand("init", "scaffold config, genesis chain log and empty vault");
  std::string init_dir;
  std::uint32_t init_difficulty = 12;
  init->add_option("--dir", init_dir, "deployment directory")->required();
  init->add_option("--difficulty", init_difficulty, "leading zero bits, 0..=32")->check(CLI::Range(0, 32));

  auto* keygen = app.add_subcommand("keygen", "write a key file and print its identity id");
  std::string kg_role, kg_name, kg_out;
  keygen->add_option("--role", kg_role, "patient, provider or admin")
      ->required()
      ->check(CLI::IsMember({"patient", "provider", "admin"}));
  keygen->add_option("--name", kg_name, "display name")->required();
  keygen->add_option("--out", kg_out, "key file path (default NAME.key)");

  auto* reg = app.add_subcommand("register", "register a key file's identity on chain");
  std::string reg_key, reg_as, reg_url, config_flag;
  reg->add_option("--key", reg_key, "key file from keygen")->required();
  reg->add_option("--as", reg_as, "key file of an admin, when registering another admin");
  reg->add_option("--url", reg_url, "running service, e.g. http://127.0.0.1:8080");
  reg->add_option("--config", config_flag, "config file for embedded mode");

  auto* serve = app.add_subcommand("serve", "run the REST service");
  serve->add_option("--config", config_flag, "config file (default $MEDLEDGER_CONFIG)");

  auto* verify = app.add_subcommand("verify", "verify a chain log");
  std::string v_chain;
  std::uint32_t v_min = 0;
  verify->add_option("--chain", v_chain, "chain log file")->required();
  verify->add_option("--min-difficulty", v_min, "reject blocks sealed below this")->check(CLI::Range(0, 32));

  auto* simc = app.add_subcommand("sim", "run a network simulation scenario");
  std::string s_scenario, s_csv;
  std::optional<std::uint64_t> s_seed;
  std::uint64_t s_max_ticks = 100000;
  simc->add_option("--scenario", s_scenario, "scenario file")->required();
  simc->add_option("--seed", s_seed, "overrides the scenario's seed");
  simc->add_option("--csv", s_csv, "event CSV path (default stdout)");
  simc->add_option("--max-ticks", s_max_ticks, "give up after this many ticks");

  auto* benchc = app.add_subcommand("bench", "upload vs download latency per record size");
  bench::BenchOptions b_opts;
  std::string b_sizes = "1KB,64KB,1MB", b_url, b_out;
  benchc->add_option("--records", b_opts.records, "records per size")->check(CLI::PositiveNumber);
  benchc->add_option("--sizes", b_sizes, "comma separated, e.g. 1KB,64KB,1MB");
  benchc->add_option("--url", b_url, "benchmark a running service instead of an embedded one");
  benchc->add_option("--difficulty", b_opts.difficulty_bits, "embedded mode difficulty")->check(CLI::Range(0, 32));
  benchc->add_option("--out", b_out, "CSV path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*init) return cmd_init(init_dir, init_difficulty, out);
    if (*keygen) return cmd_keygen(kg_role, kg_name, kg_out, out);
    if (*reg) return cmd_register(reg_key, reg_as, reg_url, config_flag, out);
    if (*serve) return cmd_serve(config_flag, out);
    if (*verify) return cmd_verify(v_chain, v_min, out);
    if (*simc) return cmd_sim(s_scenario, s_seed, s_csv, s_max_ticks, out, err);
    if (*benchc) {
      b_opts.sizes = bench::parse_sizes(b_sizes);
      if (!b_url.empty()) b_opts.url = b_url;
      return cmd_bench(b_opts, b_out, out);
    }
  } catch (const Failure& f) {
    err << "error: " << f.code << ": " << f.message << '\n';
    return f.exit_code;
  } catch (const service::ApiError& e) {
    err << "error: " << e.code() << ": " << e.what() << '\n';
    return kExitFailed;
  } catch (const service::StartupError& e) {
    err << "error: StartupError: " << e.what() << '\n';
    return kExitFailed;
  } catch (const bench::BenchError& e) {
    err << "error: BadArgument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace medledger::cli
