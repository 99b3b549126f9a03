#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medledger/chain/chain.hpp"

namespace medledger::sim {

using NodeId = std::uint32_t;
using Tick = std::uint64_t;

// Nodes in different groups cannot reach each other while the partition is
// active, i.e. for from_tick <= tick < to_tick. No to_tick means permanent.
// Nodes not named in any group stay connected to everyone.
struct Partition {
  Tick from_tick = 0;
  std::optional<Tick> to_tick;
  std::vector<std::set<NodeId>> groups;

  bool active_at(Tick t) const { return t >= from_tick && (!to_tick || t < *to_tick); }
  bool cuts(NodeId a, NodeId b) const;
};

struct SimConfig {
  std::uint32_t n_nodes = 1;
  std::uint32_t difficulty_bits = 8;
  Tick default_latency = 1;
  // Symmetric overrides keyed by (min, max).
  std::map<std::pair<NodeId, NodeId>, Tick> latency;
  std::vector<Partition> partitions;
  std::uint64_t rng_seed = 0;
  // Nonce trials each active miner makes per tick.
  std::uint64_t trials_per_tick = 64;

  Tick latency_between(NodeId a, NodeId b) const;
};

enum class ScriptKind { Mine, Register, InjectBad };

struct ScriptEvent {
  Tick tick = 0;
  NodeId node = 0;
  ScriptKind kind = ScriptKind::Mine;
  std::uint32_t count = 1;  // Mine: blocks to produce
  std::string name;         // Register
  chain::Role role = chain::Role::Patient;

  static ScriptEvent mine(Tick tick, NodeId node, std::uint32_t count = 1) {
    ScriptEvent e;
    e.tick = tick;
    e.node = node;
    e.count = count;
    return e;
  }
  static ScriptEvent inject_bad(Tick tick, NodeId node) {
    ScriptEvent e;
    e.tick = tick;
    e.node = node;
    e.kind = ScriptKind::InjectBad;
    return e;
  }
};

// Key used for `tx N register NAME ROLE` script lines.
KeyPair scripted_identity_key(std::string_view name);

enum class EventKind { MinedBlock, ReceivedBlock, RejectedBlock, Reorged, TxSubmitted };

std::string_view to_string(EventKind kind);

struct SimEvent {
  Tick tick = 0;
  NodeId node = 0;
  EventKind kind = EventKind::MinedBlock;
  std::optional<NodeId> peer;
  std::uint64_t height = 0;  // chain length after the event
  Digest digest;             // tip, or tx_id for TxSubmitted
  std::uint64_t from_len = 0;
  std::uint64_t to_len = 0;
  std::string detail;

  bool operator==(const SimEvent&) const = default;
};

std::string format_event(const SimEvent& e);
void write_text(std::ostream& out, const std::vector<SimEvent>& log);
void write_csv(std::ostream& out, const std::vector<SimEvent>& log);

class SimError : public std::runtime_error {
 public:
  enum class Code { BadConfig, UnknownNode, InvalidTx, NotQuiescent };
  SimError(Code code, std::string message);
  Code code() const { return code_; }

 private:
  Code code_;
};

struct SimNode {
  NodeId node_id = 0;
  chain::Ledger ledger;
  std::vector<chain::Transaction> pending;
  std::uint32_t mine_remaining = 0;
};

class SimWorld {
 public:
  // Throws SimError(BadConfig).
  explicit SimWorld(SimConfig config, std::vector<ScriptEvent> script = {});

  const SimConfig& config() const { return config_; }
  Tick tick() const { return tick_; }
  const std::vector<SimNode>& nodes() const { return nodes_; }
  const SimNode& node(NodeId id) const;
  const std::vector<SimEvent>& log() const { return log_; }

  // Adds a signed transaction to a node's pool. Duplicates are ignored.
  // Throws SimError(UnknownNode | InvalidTx).
  void submit_tx(NodeId node, const chain::Transaction& tx);

  // Advances one tick and returns the events it produced.
  std::vector<SimEvent> step();

  // Steps until nothing is in flight, no miner has work and no script event
  // or partition heal is still ahead. Throws SimError(NotQuiescent) after
  // max_ticks steps.
  const std::vector<SimEvent>& run_until_quiescent(Tick max_ticks);

  bool quiescent() const;
  bool converged() const;

 private:
  struct Message {
    Tick deliver_at = 0;
    std::uint64_t seq = 0;
    NodeId from = 0;
    NodeId to = 0;
    Tick sent_at = 0;
    std::shared_ptr<const chain::Chain> chain;
    std::vector<chain::Transaction> txs;
  };

  struct MiningJob {
    Digest parent;
    chain::BlockHeader header;
    std::vector<chain::Transaction> txs;
    std::uint64_t next_nonce = 0;
  };

  bool cut(NodeId a, NodeId b, Tick t) const;
  void emit(SimEvent e);
  void broadcast(NodeId from, std::optional<NodeId> except);
  void send(NodeId from, NodeId to, std::shared_ptr<const chain::Chain> chain,
            std::vector<chain::Transaction> txs);
  void run_script();
  void announce_heals();
  void deliver();
  void receive(const Message& m);
  void adopt(SimNode& node, chain::Ledger next, NodeId from);
  void add_to_pool(SimNode& node, const chain::Transaction& tx);
  void mine();
  MiningJob make_job(SimNode& node);
  void inject_bad(NodeId node);

  SimConfig config_;
  std::vector<ScriptEvent> script_;
  std::size_t script_pos_ = 0;
  std::vector<SimNode> nodes_;
  std::vector<std::optional<MiningJob>> jobs_;
  std::vector<std::uint64_t> heartbeats_;
  std::vector<Message> inflight_;
  std::uint64_t next_seq_ = 0;
  std::mt19937_64 rng_;
  Tick tick_ = 0;
  std::vector<SimEvent> log_;
  std::size_t step_start_ = 0;
};

}  // namespace medledger::sim
