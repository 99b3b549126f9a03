// Acceptance harness: one PASS/FAIL line per release criterion. Exit status is
// non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "httplib.h"
#include "json.hpp"
#include "medledger/chain/chain_log.hpp"
#include "medledger/policy/access.hpp"
#include "medledger/service/http.hpp"
#include "medledger/sim/scenario.hpp"
#include "medledger/vault/record.hpp"
#include "service_fixture.hpp"

using namespace medledger;
using medledger::testing::key_for;
using medledger::testing::TempDir;
using nlohmann::json;

namespace {

struct Verdict {
  bool ok = false;
  std::string detail;
};

Verdict pass(std::string d) { return {true, std::move(d)}; }
Verdict fail(std::string d) { return {false, std::move(d)}; }

Digest id_of(const KeyPair& k) { return chain::identity_id(k.public_key()); }

// ---- 1. tamper detection --------------------------------------------------

Verdict tamper_detection() {
  constexpr std::uint32_t kDifficulty = 12;
  chain::Ledger ledger(kDifficulty);
  std::uint64_t issued = 0;
  std::size_t tx_count = 0;
  std::optional<KeyPair> previous;
  for (int i = 1; i <= 50; ++i) {
    std::vector<chain::Transaction> txs;
    const KeyPair fresh = key_for("tamper:" + std::to_string(i));
    txs.push_back(policy::make_registration(fresh, chain::Role::Patient, "p" + std::to_string(i), ++issued));
    if (previous) {
      for (int k = 0; k < 2; ++k) {
        const std::uint64_t pid = static_cast<std::uint64_t>(i * 10 + k);
        txs.push_back(vault::anchor_record(sha256("blob" + std::to_string(pid)), pid, *previous, ++issued));
      }
    } else {
      for (int k = 0; k < 2; ++k) {
        const KeyPair extra = key_for("tamper:extra" + std::to_string(k));
        txs.push_back(policy::make_registration(extra, chain::Role::Provider, "d" + std::to_string(k), ++issued));
      }
    }
    tx_count += txs.size();
    ledger.append(chain::mine_block(ledger.chain().tip().header, std::move(txs), kDifficulty,
                                    1'000'000 + static_cast<std::uint64_t>(i) * 1000, 0));
    previous = fresh;
  }
  const chain::Chain& base = ledger.chain();
  if (base.length() != 51 || tx_count < 150) return fail("fixture too small");
  if (!chain::verify_chain(base, kDifficulty).ok) return fail("pristine chain does not verify");

  std::vector<Bytes> encoded;
  std::size_t total = 0;
  for (const auto& b : base.blocks) {
    encoded.push_back(chain::serialize(b));
    total += encoded.back().size();
  }

  std::mt19937_64 rng(20240601);
  std::size_t detected = 0;
  constexpr int kMutations = 1000;
  for (int m = 0; m < kMutations; ++m) {
    std::size_t at = rng() % total;
    std::size_t index = 0;
    while (at >= encoded[index].size()) at -= encoded[index++].size();
    Bytes bytes = encoded[index];
    bytes[at] ^= static_cast<std::uint8_t>(1 + rng() % 255);

    chain::Block mutated;
    try {
      mutated = chain::decode_block(bytes);
    } catch (const std::exception&) {
      ++detected;  // undecodable: reported as Malformed at this index
      continue;
    }
    chain::Chain copy = base;
    copy.blocks[index] = std::move(mutated);
    const chain::VerificationReport r = chain::verify_chain(copy, kDifficulty);
    const bool flagged = std::any_of(r.failures.begin(), r.failures.end(), [&](const auto& f) {
      return f.block_index == index ||
             (f.block_index == index + 1 && f.reason == chain::FailureReason::BadLink);
    });
    if (!r.ok && flagged) ++detected;
  }
  std::ostringstream d;
  d << detected << "/" << kMutations << " mutations detected on " << base.length() - 1 << " blocks, " << tx_count
    << " txs";
  return detected == kMutations ? pass(d.str()) : fail(d.str());
}

// ---- 2. proof-of-work statistics -----------------------------------------

Verdict pow_statistics() {
  constexpr std::uint32_t kDifficulty = 12;
  std::mt19937_64 rng(4242);
  const chain::BlockHeader parent = chain::genesis_header();
  double sum = 0;
  for (int run = 0; run < 50; ++run) {
    const KeyPair k = key_for("pow:" + std::to_string(run));
    const std::uint64_t start = rng();
    const chain::Block b = chain::mine_block(
        parent, {policy::make_registration(k, chain::Role::Patient, "p", 1)}, kDifficulty, 1000 + run, start);
    if (b.header.difficulty_bits != kDifficulty || !chain::meets_difficulty(b.digest(), kDifficulty)) {
      return fail("run " + std::to_string(run) + " digest misses the target");
    }
    sum += static_cast<double>(chain::mining_attempts(b, start));
  }
  const double mean = sum / 50;
  std::ostringstream d;
  d << "50 runs, all digests meet 12 bits, mean attempts " << static_cast<long>(mean);
  return mean >= 1024 && mean <= 16384 ? pass(d.str()) : fail(d.str() + " outside [1024, 16384]");
}

// ---- 3. access truth table ------------------------------------------------

struct Expected {
  bool allowed;
  policy::DenyReason reason;
};

// Independent statement of the rules: collect what each rule permits.
Expected reference_access(chain::Role role, bool owns, bool has_grant, chain::Scope scope, bool expired,
                          policy::Action action) {
  using policy::Action;
  std::set<Action> permitted;
  if (role == chain::Role::Admin || owns) permitted = {Action::Read, Action::Write};
  if (has_grant && !expired) {
    permitted.insert(Action::Read);
    if (scope == chain::Scope::ReadWrite) permitted.insert(Action::Write);
  }
  if (permitted.count(action)) return {true, policy::DenyReason::None};
  if (!has_grant) return {false, policy::DenyReason::NoGrant};
  if (expired) return {false, policy::DenyReason::Expired};
  return {false, policy::DenyReason::InsufficientScope};
}

Verdict access_truth_table() {
  using chain::Role;
  using chain::Scope;
  const KeyPair requester = key_for("acc:requester");
  const KeyPair owner = key_for("acc:owner");
  const Digest rid = id_of(requester);
  const std::uint64_t now = 5000;
  int combos = 0, agree = 0;
  for (Role role : {Role::Patient, Role::Provider, Role::Admin}) {
    for (bool owns : {false, true}) {
      for (bool has_grant : {false, true}) {
        for (Scope scope : {Scope::Read, Scope::ReadWrite}) {
          for (bool expired : {false, true}) {
            policy::ChainState s;
            s.identities[rid] = policy::Identity{rid, requester.public_key(), role, "r", 0};
            s.identities[id_of(owner)] = policy::Identity{id_of(owner), owner.public_key(), Role::Patient, "o", 0};
            s.patient_owner[52] = owns ? rid : id_of(owner);
            if (has_grant) s.grants[{52, rid}] = policy::Grant{52, rid, scope, expired ? now - 1 : now + 1, 1};
            ++combos;
            bool all = true;
            for (policy::Action action : {policy::Action::Read, policy::Action::Write}) {
              const Expected want = reference_access(role, owns, has_grant, scope, expired, action);
              const policy::AccessDecision got = policy::evaluate_access(s, rid, 52, action, now);
              all = all && got.allowed == want.allowed && got.reason == want.reason;
            }
            agree += all;
          }
        }
      }
    }
  }
  const std::string d = std::to_string(agree) + "/" + std::to_string(combos) + " combinations agree";
  return combos == 48 && agree == combos ? pass(d) : fail(d);
}

// ---- 4. vault round trip --------------------------------------------------

Verdict vault_round_trip() {
  TempDir dir("medledger-accept");
  service::EhrService svc(testing::service_config(dir, 12, true));
  const auto patient = testing::enroll(svc, "vault-owner", chain::Role::Patient);

  std::mt19937_64 rng(77);
  auto pick = [&](std::uint64_t n) { return rng() % n; };
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 -_";
  auto word = [&](std::size_t max_len) {
    std::string s;
    const std::size_t len = pick(max_len) + 1;
    for (std::size_t i = 0; i < len; ++i) s += alphabet[pick(alphabet.size())];
    return s;
  };

  std::vector<std::pair<vault::PatientRecord, Digest>> stored;
  for (std::uint64_t i = 0; i < 200; ++i) {
    vault::PatientRecord r;
    r.username = word(32);
    r.age = static_cast<std::uint32_t>(pick(vault::kMaxAge + 1));
    r.temperature = 90.0 + static_cast<double>(pick(1500)) / 100.0;
    r.time = static_cast<double>(pick(240000)) / 10000.0;
    r.patient_id = 1000 + i;
    const std::size_t n_extra = pick(4);
    for (std::size_t k = 0; k < n_extra; ++k) r.extra[word(8)] = word(64);
    const service::SubmitResult res = svc.submit_record(patient.session, r);
    if (!res.block_index) return fail("record " + std::to_string(i) + " was not mined");
    stored.emplace_back(r, res.content_address);
  }
  for (const auto& [record, address] : stored) {
    const auto got = svc.records(patient.session, record.patient_id);
    if (got.size() != 1 || !(got[0].record == record) || got[0].content_address != address) {
      return fail("record for patient " + std::to_string(record.patient_id) + " did not round trip");
    }
  }

  // Flip one byte of each stored blob on disk; every read must refuse.
  const vault::BlobStore blobs(dir / "vault");
  std::map<std::string, int> outcomes;
  for (const auto& [record, address] : stored) {
    const auto path = blobs.blob_path({address});
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const std::size_t at = pick(bytes.size());
    bytes[at] = static_cast<char>(bytes[at] ^ static_cast<char>(1 + pick(255)));
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    try {
      svc.records(patient.session, record.patient_id);
      return fail("mutated blob for patient " + std::to_string(record.patient_id) + " was accepted");
    } catch (const service::ApiError& e) {
      if (e.code() != "CorruptBlob" && e.code() != "AuthFailure") return fail("unexpected error " + e.code());
      ++outcomes[e.code()];
    }
  }

  // Below the content-address check: mutate sealed bytes and open directly.
  const aead::Key key = random_array<32>();
  const vault::PatientRecord sample = stored.front().first;
  const Bytes sealed = vault::serialize(vault::seal_record(sample, key, vault::synthetic_nonce(key, sample)));
  for (std::size_t at = 0; at < sealed.size(); ++at) {
    Bytes m = sealed;
    m[at] ^= 0x01;
    try {
      vault::open_record(vault::decode_sealed(m), key, sample.patient_id);
      return fail("sealed byte " + std::to_string(at) + " mutation opened");
    } catch (const vault::VaultError& e) {
      if (e.code() != vault::VaultErrorCode::AuthFailure && e.code() != vault::VaultErrorCode::CorruptBlob) {
        return fail("unexpected vault error on sealed byte " + std::to_string(at));
      }
    }
  }
  std::ostringstream d;
  d << "200 records field-equal; 200 blob mutations refused (CorruptBlob " << outcomes["CorruptBlob"]
    << ", AuthFailure " << outcomes["AuthFailure"] << "); " << sealed.size() << " sealed-byte flips refused";
  return pass(d.str());
}

// ---- 5. consensus convergence ---------------------------------------------

Verdict consensus_convergence() {
  const sim::Scenario sc = sim::load_scenario(std::string(MEDLEDGER_SOURCE_DIR) + "/scenarios/heal.sim");
  if (sc.config.n_nodes != 5 || sc.config.partitions.size() != 1) return fail("unexpected scenario shape");
  const sim::Partition& part = sc.config.partitions[0];
  std::multiset<std::size_t> sides;
  for (const auto& g : part.groups) sides.insert(g.size());
  if (sides != std::multiset<std::size_t>{2, 3} || !part.to_tick) return fail("scenario is not a healed 2-vs-3 split");

  sim::SimWorld w(sc.config, sc.script);
  while (w.tick() < *part.to_tick) w.step();
  std::vector<chain::Chain> forks;
  for (const auto& g : part.groups) {
    for (sim::NodeId n : g) {
      if (w.node(n).ledger.chain() != w.node(*g.begin()).ledger.chain()) return fail("a side disagrees before heal");
    }
    forks.push_back(w.node(*g.begin()).ledger.chain());
  }
  if (forks[0].tip_digest() == forks[1].tip_digest()) return fail("no fork formed");
  const std::size_t winner = chain::fork_choice_index(forks);
  std::set<sim::NodeId> losers(part.groups[1 - winner].begin(), part.groups[1 - winner].end());

  w.run_until_quiescent(10000);
  if (!w.converged()) return fail("nodes did not converge");
  for (const auto& n : w.nodes()) {
    if (n.ledger.chain().tip_digest() != forks[winner].tip_digest()) return fail("converged on a non-winner");
  }
  std::set<sim::NodeId> reorged;
  for (const auto& e : w.log()) {
    if (e.kind == sim::EventKind::Reorged) reorged.insert(e.node);
  }
  if (reorged != losers) return fail("Reorged events do not match the losing side");

  sim::SimWorld again(sc.config, sc.script);
  again.run_until_quiescent(10000);
  std::ostringstream a, b;
  sim::write_csv(a, w.log());
  sim::write_csv(b, again.log());
  if (a.str() != b.str()) return fail("event logs differ for the same seed");
  std::ostringstream d;
  d << "winner side of " << part.groups[winner].size() << " at height " << forks[winner].length() - 1 << "; "
    << losers.size() << " losers reorged; " << w.log().size() << " events identical across runs";
  return pass(d.str());
}

// ---- 6. restart determinism -----------------------------------------------

Verdict restart_determinism() {
  TempDir dir("medledger-accept");
  std::string before;
  {
    service::EhrService svc(testing::service_config(dir, 8, true));
    const auto root = testing::enroll(svc, "root", chain::Role::Admin);
    const auto pat = testing::enroll(svc, "pat", chain::Role::Patient);
    const auto doc = testing::enroll(svc, "doc", chain::Role::Provider);
    for (std::uint64_t pid = 1; pid <= 5; ++pid) {
      vault::PatientRecord r = testing::hanu_record();
      r.patient_id = pid;
      svc.submit_record(pat.session, r);
    }
    svc.grant(pat.session, 1, doc.id, chain::Scope::ReadWrite, std::nullopt);
    svc.grant(pat.session, 2, doc.id, chain::Scope::Read, 1'900'000'000'000ULL);
    svc.revoke(pat.session, 1, doc.id);
    svc.book_appointment(pat.session, 3, doc.id, 1'800'000'000'000ULL, "follow-up");
    before = svc.state_dump();
  }
  service::EhrService again(testing::service_config(dir, 8, true));
  const std::string after = again.state_dump();
  const std::string replayed =
      policy::dump_state(policy::materialize(chain::read_chain_log(dir / "chain.log").chain));
  if (after != before) return fail("state dump changed across restart");
  if (replayed != before) return fail("offline replay differs from the live state");
  return pass(std::to_string(again.chain_snapshot().length()) + " blocks replayed to a byte-identical " +
              std::to_string(before.size()) + "-byte dump");
}

// ---- 7. dashboard sample flow ---------------------------------------------

Verdict dashboard_sample_flow() {
  TempDir dir("medledger-accept");
  service::EhrService svc(testing::service_config(dir, 12, true));
  service::HttpServer http(svc);
  const int port = http.bind("127.0.0.1", 0);
  if (port <= 0) return fail("cannot bind");
  std::thread t([&] { http.serve(); });
  struct Stop {
    service::HttpServer& h;
    std::thread& t;
    ~Stop() {
      h.stop();
      t.join();
    }
  } stop{http, t};
  http.wait_until_ready();
  httplib::Client c("127.0.0.1", port);

  auto post = [&](const std::string& path, const json& body, const std::string& token) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return c.Post(path, h, body.dump(), "application/json");
  };

  const KeyPair key = key_for("accept:hanu");
  auto reg = post("/api/identities", {{"display_name", "hanu"}, {"role", "patient"}, {"seed", to_hex(key.seed())}}, "");
  if (!reg || reg->status != 200) return fail("registration failed");
  auto ch = c.Get("/api/challenge");
  if (!ch || ch->status != 200) return fail("no challenge");
  const std::string challenge = json::parse(ch->body).at("challenge");
  const Bytes raw = from_hex(challenge);
  std::array<std::uint8_t, 32> nonce{};
  std::copy(raw.begin(), raw.end(), nonce.begin());
  auto login = post("/api/login",
                    {{"username", "hanu"},
                     {"challenge", challenge},
                     {"signature", to_hex(key.sign(service::login_message(nonce)))}},
                    "");
  if (!login || login->status != 200) return fail("login failed");
  const std::string token = json::parse(login->body).at("token");

  const json record{{"username", "hanu"}, {"age", 20}, {"temperature", 100}, {"time", 20.8}, {"patient_id", 52}};
  auto submit = post("/api/records", record, token);
  if (!submit || submit->status != 200) return fail("submit failed");
  const std::string status = json::parse(submit->body).at("status");
  if (status != "Data Successfully stored into Block chain") return fail("status was \"" + status + "\"");

  auto fetched = c.Get("/api/records/52", {{"Authorization", "Bearer " + token}});
  if (!fetched || fetched->status != 200) return fail("owner could not fetch the record");
  const json list = json::parse(fetched->body).at("records");
  if (list.size() != 1) return fail("expected one record");
  const json& got = list[0];
  if (got["username"] != "hanu" || got["age"] != 20 || got["temperature"] != 100.0 || got["time"] != 20.8 ||
      got["patient_id"] != 52) {
    return fail("fetched record differs: " + got.dump());
  }
  return pass("status \"" + status + "\"; owner fetched the record over REST");
}

// ---- 8. upload vs download --------------------------------------------------

Verdict upload_vs_download() {
  std::ostringstream out, err;
  const int code = cli::run({"bench", "--records", "31", "--sizes", "1KB,64KB,1MB", "--difficulty", "12"}, out, err);
  if (code != 0) return fail("bench exited " + std::to_string(code) + ": " + err.str());

  std::istringstream csv(out.str());
  std::string line;
  std::getline(csv, line);
  if (line != "size_bytes,op,median_ms,p95_ms") return fail("unexpected CSV header: " + line);
  std::map<std::size_t, std::map<std::string, double>> medians;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string size, op, median;
    std::getline(row, size, ',');
    std::getline(row, op, ',');
    std::getline(row, median, ',');
    medians[std::stoull(size)][op] = std::stod(median);
  }
  std::ostringstream d;
  bool ok = medians.size() == 3;
  for (const std::size_t size : {1024u, 65536u, 1048576u}) {
    const auto it = medians.find(size);
    if (it == medians.end() || !it->second.count("upload") || !it->second.count("download")) {
      return fail("missing rows for size " + std::to_string(size));
    }
    const double up = it->second["upload"];
    const double down = it->second["download"];
    ok = ok && up > down;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s%zu B up %.2f ms > down %.2f ms", size == 1024 ? "" : "; ", size, up, down);
    d << buf;
  }
  return ok ? pass(d.str()) : fail(d.str());
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
    double limit_s;  // 0: no time bound
  };
  const std::vector<Criterion> criteria{
      {"tamper_detection", tamper_detection, 10},
      {"pow_statistics", pow_statistics, 30},
      {"access_truth_table", access_truth_table, 0},
      {"vault_round_trip", vault_round_trip, 0},
      {"consensus_convergence", consensus_convergence, 0},
      {"restart_determinism", restart_determinism, 0},
      {"dashboard_sample_flow", dashboard_sample_flow, 0},
      {"upload_vs_download", upload_vs_download, 120},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = fail(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (v.ok && c.limit_s > 0 && secs >= c.limit_s) v = fail(v.detail + "; over the time limit");
    failures += !v.ok;
    char timing[64];
    if (c.limit_s > 0) {
      std::snprintf(timing, sizeof timing, "%.2f s, limit %.0f s", secs, c.limit_s);
    } else {
      std::snprintf(timing, sizeof timing, "%.2f s", secs);
    }
    std::cout << (v.ok ? "PASS " : "FAIL ") << c.name << ": " << v.detail << " (" << timing << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
