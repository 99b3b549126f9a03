#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "medledger/policy/access.hpp"
#include "medledger/sim/scenario.hpp"
#include "test_support.hpp"

using namespace medledger;
using namespace medledger::sim;

namespace {

const std::filesystem::path kHealScenario = std::filesystem::path(MEDLEDGER_SOURCE_DIR) / "scenarios" / "heal.sim";

std::string csv_of(const std::vector<SimEvent>& log) {
  std::ostringstream out;
  write_csv(out, log);
  return out.str();
}

std::vector<SimEvent> events_of(const SimWorld& w, EventKind kind) {
  std::vector<SimEvent> out;
  std::ranges::copy_if(w.log(), std::back_inserter(out), [&](const SimEvent& e) { return e.kind == kind; });
  return out;
}

std::size_t common_prefix(const SimWorld& w) {
  const auto& nodes = w.nodes();
  std::size_t n = nodes.front().ledger.chain().length();
  for (const auto& node : nodes) {
    const auto& a = nodes.front().ledger.chain().blocks;
    const auto& b = node.ledger.chain().blocks;
    std::size_t k = 0;
    while (k < a.size() && k < b.size() && a[k].digest() == b[k].digest()) ++k;
    n = std::min(n, k);
  }
  return n;
}

SimConfig small_config(std::uint32_t n, std::uint64_t seed = 1) {
  SimConfig c;
  c.n_nodes = n;
  c.difficulty_bits = 6;
  c.trials_per_tick = 32;
  c.rng_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("spawn_network validates the config") {
  SimWorld one(small_config(1));
  CHECK(one.nodes().size() == 1);
  CHECK(one.tick() == 0);
  CHECK(one.converged());

  SimWorld five(small_config(5));
  for (const auto& n : five.nodes()) CHECK(n.ledger.chain() == chain::Chain::genesis_only());

  auto bad = [](SimConfig c, std::vector<ScriptEvent> script = {}) {
    try {
      SimWorld w(std::move(c), std::move(script));
      FAIL("expected BadConfig");
    } catch (const SimError& e) {
      CHECK(e.code() == SimError::Code::BadConfig);
    }
  };
  SimConfig c = small_config(3);
  c.default_latency = 0;
  bad(c);
  c = small_config(3);
  c.latency[{0, 1}] = 0;
  bad(c);
  c = small_config(3);
  c.n_nodes = 0;
  bad(c);
  c = small_config(3);
  c.partitions.push_back({5, 5, {{0}, {1}}});
  bad(c);
  c = small_config(3);
  c.partitions.push_back({0, 4, {{0, 1}, {1, 2}}});
  bad(c);
  c = small_config(3);
  c.difficulty_bits = 33;
  bad(c);
  bad(small_config(3), {ScriptEvent::mine(0, 3)});
}

TEST_CASE("submit_tx pools valid transactions once") {
  SimWorld w(small_config(2));
  const auto tx = policy::make_registration(testing::key_for("p"), chain::Role::Patient, "p", 1);
  w.submit_tx(0, tx);
  w.submit_tx(0, tx);
  CHECK(w.node(0).pending.size() == 1);
  CHECK(w.node(1).pending.empty());
  REQUIRE(events_of(w, EventKind::TxSubmitted).size() == 1);
  CHECK(events_of(w, EventKind::TxSubmitted)[0].digest == tx.tx_id);

  auto forged = tx;
  forged.signature[3] ^= 0x20;
  try {
    w.submit_tx(0, forged);
    FAIL("expected InvalidTx");
  } catch (const SimError& e) {
    CHECK(e.code() == SimError::Code::InvalidTx);
  }
  try {
    w.submit_tx(9, tx);
    FAIL("expected UnknownNode");
  } catch (const SimError& e) {
    CHECK(e.code() == SimError::Code::UnknownNode);
  }
}

TEST_CASE("step with nothing to do emits nothing") {
  SimWorld w(small_config(3));
  CHECK(w.step().empty());
  CHECK(w.tick() == 1);
}

TEST_CASE("blocks arrive after the link latency") {
  SimConfig c = small_config(2);
  c.default_latency = 2;
  SimWorld w(c, {ScriptEvent::mine(0, 0, 1)});
  w.run_until_quiescent(500);
  const auto mined = events_of(w, EventKind::MinedBlock);
  const auto received = events_of(w, EventKind::ReceivedBlock);
  REQUIRE(mined.size() == 1);
  REQUIRE(received.size() == 1);
  CHECK(received[0].node == 1);
  CHECK(received[0].tick == mined[0].tick + 2);
  CHECK(received[0].digest == mined[0].digest);
  CHECK(w.converged());
}

TEST_CASE("per-pair latency overrides the default") {
  SimConfig c = small_config(3);
  c.default_latency = 1;
  c.latency[{0, 2}] = 5;
  SimWorld w(c, {ScriptEvent::mine(0, 0, 1)});
  w.run_until_quiescent(500);
  const Tick mined_at = events_of(w, EventKind::MinedBlock).at(0).tick;
  for (const auto& e : events_of(w, EventKind::ReceivedBlock)) {
    if (e.node == 1 && e.peer == 0u) CHECK(e.tick == mined_at + 1);
    if (e.node == 2 && e.peer == 0u) CHECK(e.tick == mined_at + 5);
  }
}

TEST_CASE("run_until_quiescent") {
  SUBCASE("empty scenario settles at tick 1") {
    SimWorld w(small_config(4));
    CHECK(w.run_until_quiescent(10).empty());
    CHECK(w.tick() == 1);
  }
  SUBCASE("twenty scripted blocks without partitions converge") {
    std::vector<ScriptEvent> script;
    for (std::uint32_t i = 0; i < 20; ++i) script.push_back(ScriptEvent::mine(i * 3, i % 5, 1));
    SimWorld w(small_config(5, 11), script);
    w.run_until_quiescent(5000);
    CHECK(w.converged());
    CHECK(events_of(w, EventKind::MinedBlock).size() >= 20);
    for (const auto& n : w.nodes()) CHECK(chain::verify_chain(n.ledger.chain(), 6).ok);
  }
  SUBCASE("a permanent partition leaves divergent chains") {
    SimConfig c = small_config(4);
    c.partitions.push_back({0, std::nullopt, {{0, 1}, {2, 3}}});
    SimWorld w(c, {ScriptEvent::mine(0, 0, 2), ScriptEvent::mine(0, 2, 1)});
    w.run_until_quiescent(2000);
    CHECK_FALSE(w.converged());
    CHECK(w.node(0).ledger.chain() == w.node(1).ledger.chain());
    CHECK(w.node(2).ledger.chain() == w.node(3).ledger.chain());
  }
  SUBCASE("a miner that never finishes hits max_ticks") {
    SimConfig c = small_config(2);
    c.difficulty_bits = 30;
    c.trials_per_tick = 1;
    SimWorld w(c, {ScriptEvent::mine(0, 0, 1)});
    try {
      w.run_until_quiescent(20);
      FAIL("expected NotQuiescent");
    } catch (const SimError& e) {
      CHECK(e.code() == SimError::Code::NotQuiescent);
    }
    CHECK(w.tick() == 20);
  }
}

TEST_CASE("mid-propagation the world is not converged") {
  SimConfig c = small_config(3);
  c.default_latency = 3;
  SimWorld w(c, {ScriptEvent::mine(0, 0, 1)});
  while (events_of(w, EventKind::MinedBlock).empty()) w.step();
  CHECK_FALSE(w.converged());
  w.run_until_quiescent(100);
  CHECK(w.converged());
}

TEST_CASE("the bundled heal scenario converges to the offline fork choice winner") {
  const Scenario sc = load_scenario(kHealScenario);
  REQUIRE(sc.config.n_nodes == 5);
  REQUIRE(sc.config.partitions.size() == 1);
  const Partition& part = sc.config.partitions[0];
  REQUIRE(part.to_tick.has_value());

  SimWorld w(sc.config, sc.script);
  while (w.tick() < *part.to_tick) w.step();

  // Just before the heal each side agrees internally and the sides differ.
  const chain::Chain side_a = w.node(0).ledger.chain();
  const chain::Chain side_b = w.node(2).ledger.chain();
  CHECK(w.node(1).ledger.chain() == side_a);
  CHECK(w.node(3).ledger.chain() == side_b);
  CHECK(w.node(4).ledger.chain() == side_b);
  REQUIRE(side_a.tip_digest() != side_b.tip_digest());
  CHECK(side_a.length() > 1);
  CHECK(side_b.length() > 1);

  const std::vector<chain::Chain> forks{side_a, side_b};
  const std::size_t winner = chain::fork_choice_index(forks);
  const std::set<NodeId> losers = winner == 0 ? std::set<NodeId>{2, 3, 4} : std::set<NodeId>{0, 1};

  w.run_until_quiescent(1000);
  CHECK(w.converged());
  for (const auto& n : w.nodes()) CHECK(n.ledger.chain().tip_digest() == forks[winner].tip_digest());

  std::set<NodeId> reorged;
  for (const auto& e : events_of(w, EventKind::Reorged)) reorged.insert(e.node);
  CHECK(reorged == losers);
}

TEST_CASE("event logs are byte-identical for the same seed") {
  const Scenario sc = load_scenario(kHealScenario);
  SimWorld a(sc.config, sc.script);
  SimWorld b(sc.config, sc.script);
  a.run_until_quiescent(1000);
  b.run_until_quiescent(1000);
  CHECK(csv_of(a.log()) == csv_of(b.log()));

  SimConfig other = sc.config;
  other.rng_seed += 1;
  SimWorld c(other, sc.script);
  c.run_until_quiescent(1000);
  CHECK(csv_of(a.log()) != csv_of(c.log()));
}

TEST_CASE("orphaned transactions return to the pool") {
  SimConfig c = small_config(4, 3);
  c.partitions.push_back({0, 40, {{0, 1}, {2, 3}}});
  SimWorld w(c, {ScriptEvent::mine(0, 0, 1), ScriptEvent::mine(0, 2, 3)});
  const auto tx = policy::make_registration(testing::key_for("orphan"), chain::Role::Patient, "orphan", 5);
  w.submit_tx(0, tx);
  while (w.tick() < 40) w.step();
  REQUIRE(w.node(0).ledger.state().tx_ids.contains(tx.tx_id));
  REQUIRE(w.node(2).ledger.chain().length() > w.node(0).ledger.chain().length());

  w.run_until_quiescent(1000);
  CHECK(w.converged());
  CHECK_FALSE(w.node(0).ledger.state().tx_ids.contains(tx.tx_id));
  CHECK(std::ranges::any_of(w.node(0).pending, [&](const auto& p) { return p.tx_id == tx.tx_id; }));
}

TEST_CASE("forged blocks are rejected by every receiver") {
  SimWorld w(small_config(4, 5), {ScriptEvent::mine(0, 0, 2), ScriptEvent::inject_bad(30, 1)});
  w.run_until_quiescent(1000);
  const auto rejected = events_of(w, EventKind::RejectedBlock);
  REQUIRE(rejected.size() == 3);
  for (const auto& e : rejected) {
    CHECK(e.peer == 1u);
    CHECK(e.detail.find("BadSignature") != std::string::npos);
  }
  CHECK(w.converged());
  for (const auto& n : w.nodes()) CHECK(chain::verify_chain(n.ledger.chain(), 6).ok);
}

TEST_CASE("scripted registrations are mined into the chain") {
  const Scenario sc = parse_scenario_text(
      "nodes 3\ndifficulty 6\ntrials 32\nat 0 tx 0 register alice patient\nat 1 node 0 mine\n");
  SimWorld w(sc.config, sc.script);
  w.run_until_quiescent(500);
  const Digest alice = chain::identity_id(scripted_identity_key("alice").public_key());
  for (const auto& n : w.nodes()) CHECK(n.ledger.state().identities.contains(alice));
}

TEST_CASE("property: safety and prefix consistency over random partitioned runs") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    SimConfig c = small_config(2 + static_cast<std::uint32_t>(rng() % 4), seed);
    c.default_latency = 1 + rng() % 3;
    const Tick heal = 20 + rng() % 40;
    std::set<NodeId> left, right;
    for (NodeId i = 0; i < c.n_nodes; ++i) (i % 2 ? left : right).insert(i);
    c.partitions.push_back({rng() % 10, heal, {left, right}});
    std::vector<ScriptEvent> script;
    for (int i = 0; i < 6; ++i) {
      const Tick at = rng() % 60;
      const auto miner = static_cast<NodeId>(rng() % c.n_nodes);
      script.push_back(ScriptEvent::mine(at, miner));
    }
    SimWorld w(c, script);

    std::size_t converged_height = 1;
    for (Tick t = 0; t < 3000 && !(t > 0 && w.quiescent()); ++t) {
      w.step();
      for (const auto& n : w.nodes()) REQUIRE(chain::verify_chain(n.ledger.chain(), c.difficulty_bits).ok);
      CHECK(common_prefix(w) >= converged_height);
      if (w.converged()) converged_height = w.node(0).ledger.chain().length();
    }
    REQUIRE(w.quiescent());
    CHECK(w.converged());
  }
}

TEST_CASE("scenario parser") {
  const Scenario sc = parse_scenario_text(
      "# comment\n"
      "nodes 4\n"
      "difficulty 10\n"
      "latency 3\n"
      "latency 2 0 7\n"
      "trials 16\n"
      "seed 99\n"
      "partition 0,1|2 3 from 4 to 9\n"
      "partition 0 | 1 from 10\n"
      "node 1 mine\n"
      "at 7 node 2 mine 4   # trailing comment\n"
      "at 8 tx 3 register carol provider\n"
      "at 9 inject 0 bad\n");
  CHECK(sc.config.n_nodes == 4);
  CHECK(sc.config.difficulty_bits == 10);
  CHECK(sc.config.default_latency == 3);
  CHECK(sc.config.latency_between(2, 0) == 7);
  CHECK(sc.config.latency_between(1, 0) == 3);
  CHECK(sc.config.trials_per_tick == 16);
  CHECK(sc.config.rng_seed == 99);
  REQUIRE(sc.config.partitions.size() == 2);
  CHECK(sc.config.partitions[0].groups.size() == 3);
  CHECK(sc.config.partitions[0].to_tick == 9u);
  CHECK_FALSE(sc.config.partitions[1].to_tick.has_value());
  REQUIRE(sc.script.size() == 4);
  CHECK(sc.script[0].tick == 0);
  CHECK(sc.script[1].count == 4);
  CHECK(sc.script[2].role == chain::Role::Provider);
  CHECK(sc.script[3].kind == ScriptKind::InjectBad);

  auto error_line = [](const std::string& text) -> std::size_t {
    try {
      parse_scenario_text(text);
    } catch (const ScenarioError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(error_line("nodes 2\nfly 1\n") == 2);
  CHECK(error_line("nodes 2\n\nnode 0 mine x\n") == 3);
  CHECK(error_line("latency 0\n") == 1);
  CHECK(error_line("difficulty 40\n") == 1);
  CHECK(error_line("nodes 2\npartition 0 | 1 from 5 to 5\n") == 2);
  CHECK(error_line("nodes 2\nat 1 node 5 mine\n") == 2);
  CHECK(error_line("nodes 2\npartition 0,1 | 1 from 0\n") == 2);
  CHECK(error_line("at 1 tx 0 register x wizard\n") == 1);
  CHECK(error_line("nodes 2\nnode 0 mine 1 extra\n") == 2);
}

TEST_CASE("text and csv log formats") {
  SimEvent e;
  e.tick = 4;
  e.node = 2;
  e.kind = EventKind::Reorged;
  e.peer = 1;
  e.from_len = 3;
  e.to_len = 4;
  e.height = 4;
  e.digest = sha256(std::string_view("x"));
  CHECK(format_event(e) == "t=4 node=2 Reorged peer=1 from_len=3 to_len=4 tip=" + e.digest.hex().substr(0, 16));
  const std::string csv = csv_of({e});
  CHECK(csv == "tick,node,event,peer,height,digest,from_len,to_len,detail\n4,2,Reorged,1,4," + e.digest.hex() +
                   ",3,4,\n");
}
