#include "medledger/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "httplib.h"
#include "json.hpp"
#include "medledger/service/service.hpp"

namespace medledger::bench {

namespace {

using nlohmann::json;
using Millis = std::chrono::duration<double, std::milli>;

double time_ms(const std::function<void()>& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return Millis(std::chrono::steady_clock::now() - start).count();
}

// A record whose canonical encoding is exactly `size` bytes when `size` is
// above the fixed overhead; the padding lives in `extra`.
vault::PatientRecord sized_record(std::size_t size, std::uint64_t patient_id) {
  vault::PatientRecord r{"bench", 42, 98.6, 12.5, patient_id, {{"padding", ""}}};
  const std::size_t base = vault::serialize(r).size();
  if (size > base) r.extra["padding"] = std::string(size - base, 'x');
  return r;
}

json to_json(const vault::PatientRecord& r) {
  return {{"username", r.username}, {"age", r.age},           {"temperature", r.temperature},
          {"time", r.time},         {"patient_id", r.patient_id}, {"extra", r.extra}};
}

std::vector<BenchRow> summarize(std::size_t size, const std::vector<double>& up,
                                const std::vector<double>& down) {
  return {{size, "upload", percentile(up, 50), percentile(up, 95)},
          {size, "download", percentile(down, 50), percentile(down, 95)}};
}

class Workspace {
 public:
  explicit Workspace(const std::optional<std::filesystem::path>& dir) {
    if (dir) {
      path_ = *dir;
    } else {
      std::random_device rd;
      path_ = std::filesystem::temp_directory_path() /
              ("medledger-bench-" + std::to_string(rd()) + std::to_string(rd()));
      owned_ = true;
    }
    std::filesystem::create_directories(path_);
  }
  ~Workspace() {
    std::error_code ec;
    if (owned_) std::filesystem::remove_all(path_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

BenchReport run_embedded(const BenchOptions& o) {
  Workspace ws(o.work_dir);
  service::ServiceConfig cfg;
  cfg.difficulty_bits = o.difficulty_bits;
  cfg.auto_mine = true;
  cfg.vault_dir = ws.path() / "vault";
  cfg.chain_log = ws.path() / "chain.log";
  cfg.keystore_dir = ws.path() / "keys";
  service::EhrService svc(cfg);

  const auto reg = svc.register_identity(std::nullopt, {"bench-patient", chain::Role::Patient, std::nullopt});
  const KeyPair key = KeyPair::from_seed(*reg.generated_seed);
  const service::Challenge c = svc.challenge();
  const service::Session s =
      svc.login(reg.identity_id.hex(), to_hex(c.nonce), to_hex(key.sign(service::login_message(c.nonce))));

  BenchReport report;
  std::uint64_t next_pid = 1;
  for (const std::size_t size : o.sizes) {
    std::vector<double> up, down;
    std::vector<std::uint64_t> growth;
    for (std::size_t i = 0; i < o.records; ++i) {
      const std::uint64_t pid = next_pid++;
      const vault::PatientRecord record = sized_record(size, pid);
      const auto before = std::filesystem::file_size(cfg.chain_log);
      up.push_back(time_ms([&] {
        if (!svc.submit_record(s, record).block_index) svc.mine();
      }));
      growth.push_back(std::filesystem::file_size(cfg.chain_log) - before);
      std::vector<service::StoredRecord> got;
      down.push_back(time_ms([&] { got = svc.records(s, pid); }));
      if (got.size() != 1 || got.front().record != record) {
        throw BenchError(BenchErrorCode::RequestFailed, "downloaded record differs from upload");
      }
    }
    for (auto& row : summarize(size, up, down)) report.rows.push_back(std::move(row));
    report.log_growth.push_back(std::move(growth));
  }
  return report;
}

class Remote {
 public:
  explicit Remote(const std::string& url) : client_(url) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(120);
  }

  json call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Headers h;
    if (!token_.empty()) h.emplace("Authorization", "Bearer " + token_);
    auto r = method == "GET" ? client_.Get(path, h) : client_.Post(path, h, body.is_null() ? "" : body.dump(),
                                                                    "application/json");
    if (!r) {
      throw BenchError(BenchErrorCode::ServiceUnreachable, httplib::to_string(r.error()));
    }
    json j = json::parse(r->body, nullptr, false);
    if (r->status != 200 && r->status != 202) {
      const std::string code = j.is_object() ? j.value("code", "") : "";
      throw BenchError(BenchErrorCode::RequestFailed,
                       method + " " + path + " -> " + std::to_string(r->status) + " " + code);
    }
    last_status_ = r->status;
    return j;
  }

  int last_status() const { return last_status_; }
  void set_token(std::string t) { token_ = std::move(t); }

 private:
  httplib::Client client_;
  std::string token_;
  int last_status_ = 0;
};

BenchReport run_remote(const BenchOptions& o) {
  Remote api(*o.url);
  api.call("GET", "/api/health");

  // Fresh identity per run so display names never collide.
  const std::string name = "bench-" + to_hex(random_array<6>());
  const json reg = api.call("POST", "/api/identities", {{"display_name", name}, {"role", "patient"}});
  if (api.last_status() == 202) api.call("POST", "/api/mine");
  const Bytes seed_bytes = from_hex(reg.at("seed").get<std::string>());
  Seed seed{};
  std::copy(seed_bytes.begin(), seed_bytes.end(), seed.begin());
  const KeyPair key = KeyPair::from_seed(seed);
  const json ch = api.call("GET", "/api/challenge");
  const Bytes nonce_bytes = from_hex(ch.at("challenge").get<std::string>());
  std::array<std::uint8_t, 32> nonce{};
  std::copy(nonce_bytes.begin(), nonce_bytes.end(), nonce.begin());
  const json login = api.call("POST", "/api/login",
                              {{"username", reg.at("identity_id")},
                               {"challenge", ch.at("challenge")},
                               {"signature", to_hex(key.sign(service::login_message(nonce)))}});
  api.set_token(login.at("token").get<std::string>());

  // Patient ids from a random base keep reruns against one service apart.
  std::mt19937_64 rng(std::random_device{}());
  std::uint64_t next_pid = (rng() >> 16) + 1;
  BenchReport report;
  for (const std::size_t size : o.sizes) {
    std::vector<double> up, down;
    for (std::size_t i = 0; i < o.records; ++i) {
      const std::uint64_t pid = next_pid++;
      const json body = to_json(sized_record(size, pid));
      up.push_back(time_ms([&] {
        api.call("POST", "/api/records", body);
        if (api.last_status() == 202) api.call("POST", "/api/mine");
      }));
      down.push_back(time_ms([&] { api.call("GET", "/api/records/" + std::to_string(pid)); }));
    }
    for (auto& row : summarize(size, up, down)) report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace

BenchError::BenchError(BenchErrorCode code, const std::string& detail)
    : std::runtime_error(detail), code_(code) {}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    std::string item = list.substr(pos, comma - pos);
    pos = comma + 1;
    std::transform(item.begin(), item.end(), item.begin(), [](unsigned char ch) { return std::toupper(ch); });
    std::size_t mult = 1;
    if (item.ends_with("KB")) {
      mult = 1024;
      item.resize(item.size() - 2);
    } else if (item.ends_with("MB")) {
      mult = 1024 * 1024;
      item.resize(item.size() - 2);
    } else if (item.ends_with("B")) {
      item.resize(item.size() - 1);
    }
    if (item.empty() || !std::all_of(item.begin(), item.end(), [](unsigned char ch) { return std::isdigit(ch); }) ||
        item.size() > 12) {
      throw BenchError(BenchErrorCode::BadArgument, "bad size in list: " + list);
    }
    const std::size_t n = std::stoull(item) * mult;
    if (n == 0) throw BenchError(BenchErrorCode::BadArgument, "sizes must be positive");
    out.push_back(n);
  }
  return out;
}

double percentile(std::vector<double> sample, double p) {
  if (sample.empty()) return 0;
  std::sort(sample.begin(), sample.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sample.size())));
  return sample[std::clamp<std::size_t>(rank, 1, sample.size()) - 1];
}

BenchReport run_bench(const BenchOptions& options) {
  if (options.records == 0) throw BenchError(BenchErrorCode::BadArgument, "records must be positive");
  if (options.sizes.empty()) throw BenchError(BenchErrorCode::BadArgument, "no sizes given");
  return options.url ? run_remote(options) : run_embedded(options);
}

void write_csv(std::ostream& out, const BenchReport& report) {
  out << "size_bytes,op,median_ms,p95_ms\n";
  char buf[64];
  for (const BenchRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f", r.median_ms, r.p95_ms);
    out << r.size_bytes << ',' << r.op << ',' << buf << '\n';
  }
}

}  // namespace medledger::bench
