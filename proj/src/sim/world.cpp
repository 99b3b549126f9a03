#include "medledger/sim/world.hpp"

#include <algorithm>
#include <sstream>

#include "medledger/policy/access.hpp"

namespace medledger::sim {

namespace {

constexpr std::size_t kMaxTxsPerBlock = 64;

Digest sim_seed(std::string_view label, std::uint64_t seed, NodeId node, std::uint64_t n) {
  Writer w;
  w.str(label);
  w.u64(seed);
  w.u32(node);
  w.u64(n);
  return sha256(w.data());
}

std::string short_hex(const Digest& d) { return d.hex().substr(0, 16); }

[[noreturn]] void bad_config(const std::string& what) {
  throw SimError(SimError::Code::BadConfig, what);
}

}  // namespace

KeyPair scripted_identity_key(std::string_view name) {
  return KeyPair::from_seed(sha256("medledger-sim-identity:" + std::string(name)).bytes);
}

bool Partition::cuts(NodeId a, NodeId b) const {
  std::optional<std::size_t> ga, gb;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].contains(a)) ga = i;
    if (groups[i].contains(b)) gb = i;
  }
  return ga && gb && *ga != *gb;
}

Tick SimConfig::latency_between(NodeId a, NodeId b) const {
  auto it = latency.find({std::min(a, b), std::max(a, b)});
  return it == latency.end() ? default_latency : it->second;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::MinedBlock: return "MinedBlock";
    case EventKind::ReceivedBlock: return "ReceivedBlock";
    case EventKind::RejectedBlock: return "RejectedBlock";
    case EventKind::Reorged: return "Reorged";
    case EventKind::TxSubmitted: return "TxSubmitted";
  }
  return "?";
}

std::string format_event(const SimEvent& e) {
  std::ostringstream out;
  out << "t=" << e.tick << " node=" << e.node << ' ' << to_string(e.kind);
  if (e.peer) out << " peer=" << *e.peer;
  switch (e.kind) {
    case EventKind::MinedBlock:
    case EventKind::ReceivedBlock:
      out << " height=" << e.height << " tip=" << short_hex(e.digest);
      break;
    case EventKind::RejectedBlock:
      out << " height=" << e.height;
      break;
    case EventKind::Reorged:
      out << " from_len=" << e.from_len << " to_len=" << e.to_len << " tip=" << short_hex(e.digest);
      break;
    case EventKind::TxSubmitted:
      out << " tx=" << short_hex(e.digest);
      break;
  }
  if (!e.detail.empty()) out << ' ' << e.detail;
  return out.str();
}

void write_text(std::ostream& out, const std::vector<SimEvent>& log) {
  for (const auto& e : log) out << format_event(e) << '\n';
}

void write_csv(std::ostream& out, const std::vector<SimEvent>& log) {
  out << "tick,node,event,peer,height,digest,from_len,to_len,detail\n";
  for (const auto& e : log) {
    out << e.tick << ',' << e.node << ',' << to_string(e.kind) << ',';
    if (e.peer) out << *e.peer;
    out << ',' << e.height << ',' << e.digest.hex() << ',' << e.from_len << ',' << e.to_len << ','
        << e.detail << '\n';
  }
}

SimError::SimError(Code code, std::string message) : std::runtime_error(std::move(message)), code_(code) {}

SimWorld::SimWorld(SimConfig config, std::vector<ScriptEvent> script)
    : config_(std::move(config)), script_(std::move(script)), rng_(config_.rng_seed) {
  const auto n = config_.n_nodes;
  if (n < 1) bad_config("n_nodes must be at least 1");
  if (config_.difficulty_bits > chain::kMaxDifficultyBits) bad_config("difficulty_bits must be in 0..=32");
  if (config_.default_latency < 1) bad_config("latency must be at least 1 tick");
  if (config_.trials_per_tick < 1) bad_config("trials per tick must be at least 1");
  for (const auto& [pair, ticks] : config_.latency) {
    if (pair.first >= n || pair.second >= n || pair.first == pair.second) {
      bad_config("latency override names an invalid node pair");
    }
    if (ticks < 1) bad_config("latency must be at least 1 tick");
  }
  for (const auto& p : config_.partitions) {
    if (p.to_tick && *p.to_tick <= p.from_tick) bad_config("partition must end after it starts");
    std::set<NodeId> seen;
    for (const auto& g : p.groups) {
      for (NodeId id : g) {
        if (id >= n) bad_config("partition names unknown node " + std::to_string(id));
        if (!seen.insert(id).second) bad_config("node appears in two partition groups");
      }
    }
  }
  for (const auto& ev : script_) {
    if (ev.node >= n) bad_config("script names unknown node " + std::to_string(ev.node));
  }
  std::stable_sort(script_.begin(), script_.end(),
                   [](const ScriptEvent& a, const ScriptEvent& b) { return a.tick < b.tick; });

  nodes_.reserve(n);
  for (NodeId i = 0; i < n; ++i) {
    nodes_.push_back(SimNode{i, chain::Ledger(config_.difficulty_bits), {}, 0});
  }
  jobs_.resize(n);
  heartbeats_.assign(n, 0);
}

const SimNode& SimWorld::node(NodeId id) const {
  if (id >= nodes_.size()) throw SimError(SimError::Code::UnknownNode, "unknown node " + std::to_string(id));
  return nodes_[id];
}

bool SimWorld::cut(NodeId a, NodeId b, Tick t) const {
  return std::ranges::any_of(config_.partitions,
                             [&](const Partition& p) { return p.active_at(t) && p.cuts(a, b); });
}

void SimWorld::emit(SimEvent e) {
  e.tick = tick_;
  log_.push_back(std::move(e));
}

void SimWorld::submit_tx(NodeId node_id, const chain::Transaction& tx) {
  if (node_id >= nodes_.size()) {
    throw SimError(SimError::Code::UnknownNode, "unknown node " + std::to_string(node_id));
  }
  if (chain::check_transaction(tx) != chain::TxCheck::Ok) {
    throw SimError(SimError::Code::InvalidTx, "transaction fails its id or signature check");
  }
  SimNode& node = nodes_[node_id];
  const auto before = node.pending.size();
  add_to_pool(node, tx);
  if (node.pending.size() == before) return;
  SimEvent e;
  e.node = node_id;
  e.kind = EventKind::TxSubmitted;
  e.height = node.ledger.chain().length();
  e.digest = tx.tx_id;
  e.detail = std::string(chain::kind_name(tx.body));
  emit(std::move(e));
}

void SimWorld::add_to_pool(SimNode& node, const chain::Transaction& tx) {
  if (node.ledger.state().tx_ids.contains(tx.tx_id)) return;
  if (std::ranges::any_of(node.pending, [&](const auto& p) { return p.tx_id == tx.tx_id; })) return;
  if (chain::check_transaction(tx) != chain::TxCheck::Ok) return;
  node.pending.push_back(tx);
}

std::vector<SimEvent> SimWorld::step() {
  step_start_ = log_.size();
  run_script();
  announce_heals();
  deliver();
  mine();
  ++tick_;
  return {log_.begin() + static_cast<std::ptrdiff_t>(step_start_), log_.end()};
}

void SimWorld::run_script() {
  while (script_pos_ < script_.size() && script_[script_pos_].tick <= tick_) {
    const ScriptEvent& ev = script_[script_pos_++];
    switch (ev.kind) {
      case ScriptKind::Mine:
        nodes_[ev.node].mine_remaining += ev.count;
        break;
      case ScriptKind::Register: {
        const KeyPair key = scripted_identity_key(ev.name);
        submit_tx(ev.node, policy::make_registration(key, ev.role, ev.name, tick_ * 1000));
        break;
      }
      case ScriptKind::InjectBad:
        inject_bad(ev.node);
        break;
    }
  }
}

void SimWorld::announce_heals() {
  std::set<NodeId> announcers;
  for (const auto& p : config_.partitions) {
    if (!p.to_tick || *p.to_tick != tick_) continue;
    for (const auto& g : p.groups) announcers.insert(g.begin(), g.end());
  }
  for (NodeId id : announcers) broadcast(id, std::nullopt);
}

void SimWorld::broadcast(NodeId from, std::optional<NodeId> except) {
  auto snapshot = std::make_shared<const chain::Chain>(nodes_[from].ledger.chain());
  for (NodeId to = 0; to < nodes_.size(); ++to) {
    if (to == from || to == except) continue;
    send(from, to, snapshot, nodes_[from].pending);
  }
}

void SimWorld::send(NodeId from, NodeId to, std::shared_ptr<const chain::Chain> chain,
                    std::vector<chain::Transaction> txs) {
  if (cut(from, to, tick_)) return;
  inflight_.push_back(Message{tick_ + config_.latency_between(from, to), next_seq_++, from, to, tick_,
                              std::move(chain), std::move(txs)});
}

void SimWorld::deliver() {
  std::vector<Message> due;
  std::vector<Message> later;
  for (auto& m : inflight_) (m.deliver_at <= tick_ ? due : later).push_back(std::move(m));
  inflight_ = std::move(later);
  std::ranges::sort(due, [](const Message& a, const Message& b) { return a.seq < b.seq; });
  for (const auto& m : due) {
    if (cut(m.from, m.to, tick_)) continue;
    receive(m);
  }
}

void SimWorld::receive(const Message& m) {
  SimNode& node = nodes_[m.to];
  for (const auto& tx : m.txs) add_to_pool(node, tx);

  const chain::Chain& incoming = *m.chain;
  SimEvent e;
  e.node = m.to;
  e.peer = m.from;
  e.height = incoming.length();
  e.digest = incoming.tip_digest();

  const chain::VerificationReport report = chain::verify_chain(incoming, config_.difficulty_bits);
  if (!report.ok) {
    const auto& f = report.failures.front();
    e.kind = EventKind::RejectedBlock;
    e.detail = "reason=" + std::string(chain::to_string(f.reason)) + " index=" + std::to_string(f.block_index);
    emit(std::move(e));
    return;
  }
  const chain::Chain& local = node.ledger.chain();
  if (!chain::fork_choice_prefers(incoming, local)) {
    e.kind = EventKind::ReceivedBlock;
    e.detail = "kept";
    emit(std::move(e));
    return;
  }
  std::optional<chain::Ledger> next;
  try {
    next = chain::Ledger::replay(incoming, config_.difficulty_bits);
  } catch (const chain::AppendError& err) {
    e.kind = EventKind::RejectedBlock;
    e.detail = "reason=" + std::string(chain::to_string(err.code()));
    emit(std::move(e));
    return;
  }
  e.kind = EventKind::ReceivedBlock;
  e.detail = "adopted";
  emit(std::move(e));
  adopt(node, std::move(*next), m.from);
}

void SimWorld::adopt(SimNode& node, chain::Ledger next, NodeId from) {
  const auto& old_blocks = node.ledger.chain().blocks;
  const auto& new_blocks = next.chain().blocks;
  std::size_t common = 0;
  while (common < old_blocks.size() && common < new_blocks.size() &&
         old_blocks[common] == new_blocks[common]) {
    ++common;
  }
  std::vector<chain::Transaction> orphaned;
  for (std::size_t i = common; i < old_blocks.size(); ++i) {
    for (const auto& tx : old_blocks[i].transactions) orphaned.push_back(tx);
  }
  if (common < old_blocks.size()) {
    SimEvent e;
    e.node = node.node_id;
    e.peer = from;
    e.kind = EventKind::Reorged;
    e.from_len = old_blocks.size();
    e.to_len = new_blocks.size();
    e.height = new_blocks.size();
    e.digest = next.chain().tip_digest();
    e.detail = "orphaned=" + std::to_string(old_blocks.size() - common);
    emit(std::move(e));
  }

  node.ledger = std::move(next);
  std::vector<chain::Transaction> pool = std::move(node.pending);
  node.pending.clear();
  for (const auto& tx : orphaned) add_to_pool(node, tx);
  for (const auto& tx : pool) add_to_pool(node, tx);
  broadcast(node.node_id, from);
}

SimWorld::MiningJob SimWorld::make_job(SimNode& node) {
  const chain::Chain& c = node.ledger.chain();
  MiningJob job;
  job.parent = c.tip_digest();
  job.header.index = c.tip().header.index + 1;
  job.header.prev_hash = job.parent;
  job.header.timestamp_ms = tick_ * 1000 + node.node_id;
  job.header.difficulty_bits = config_.difficulty_bits;

  // Keep only what applies cleanly on top of the tip, in pool order.
  policy::ChainState scratch = node.ledger.state();
  for (const auto& tx : node.pending) {
    if (job.txs.size() == kMaxTxsPerBlock) break;
    try {
      policy::apply_transaction(scratch, tx,
                                {job.header.index, static_cast<std::uint32_t>(job.txs.size()),
                                 job.header.timestamp_ms});
      job.txs.push_back(tx);
    } catch (const policy::TxRejected&) {
    }
  }
  if (job.txs.empty()) {
    // Blocks must carry a transaction; an idle miner registers a throwaway key.
    const std::uint64_t n = heartbeats_[node.node_id]++;
    const KeyPair key =
        KeyPair::from_seed(sim_seed("medledger-sim-heartbeat", config_.rng_seed, node.node_id, n).bytes);
    job.txs.push_back(policy::make_registration(
        key, chain::Role::Patient, "hb-" + std::to_string(node.node_id) + "-" + std::to_string(n),
        job.header.timestamp_ms));
  }
  job.header.tx_root = chain::tx_root(job.txs);
  job.next_nonce = rng_();
  return job;
}

void SimWorld::mine() {
  for (SimNode& node : nodes_) {
    if (node.mine_remaining == 0) continue;
    auto& job = jobs_[node.node_id];
    if (!job || job->parent != node.ledger.chain().tip_digest()) job = make_job(node);

    auto nonce = chain::search_nonce(job->header, job->next_nonce, config_.trials_per_tick);
    if (!nonce) {
      job->next_nonce += config_.trials_per_tick;
      continue;
    }
    chain::Block block{job->header, std::move(job->txs)};
    block.header.nonce = *nonce;
    job.reset();
    node.ledger.append(block);
    --node.mine_remaining;

    std::erase_if(node.pending,
                  [&](const chain::Transaction& tx) { return node.ledger.state().tx_ids.contains(tx.tx_id); });
    SimEvent e;
    e.node = node.node_id;
    e.kind = EventKind::MinedBlock;
    e.height = node.ledger.chain().length();
    e.digest = block.digest();
    e.detail = "txs=" + std::to_string(block.transactions.size());
    emit(std::move(e));
    broadcast(node.node_id, std::nullopt);
  }
}

void SimWorld::inject_bad(NodeId id) {
  // A correctly mined block whose only transaction carries a forged signature.
  SimNode& node = nodes_[id];
  const std::uint64_t n = heartbeats_[id]++;
  const KeyPair key = KeyPair::from_seed(sim_seed("medledger-sim-forged", config_.rng_seed, id, n).bytes);
  chain::Transaction tx = policy::make_registration(key, chain::Role::Patient,
                                                    "forged-" + std::to_string(id), tick_ * 1000);
  tx.signature[0] ^= 0x01;
  chain::Block block = chain::mine_block(node.ledger.chain().tip().header, {tx}, config_.difficulty_bits,
                                         tick_ * 1000 + id, rng_());
  auto forged = std::make_shared<chain::Chain>(node.ledger.chain());
  forged->blocks.push_back(std::move(block));
  std::shared_ptr<const chain::Chain> snapshot = std::move(forged);
  for (NodeId to = 0; to < nodes_.size(); ++to) {
    if (to != id) send(id, to, snapshot, {});
  }
}

bool SimWorld::quiescent() const {
  if (!inflight_.empty() || script_pos_ < script_.size()) return false;
  if (std::ranges::any_of(nodes_, [](const SimNode& n) { return n.mine_remaining > 0; })) return false;
  return std::ranges::none_of(config_.partitions,
                              [&](const Partition& p) { return p.to_tick && *p.to_tick >= tick_; });
}

const std::vector<SimEvent>& SimWorld::run_until_quiescent(Tick max_ticks) {
  if (max_ticks == 0) throw SimError(SimError::Code::BadConfig, "max_ticks must be positive");
  Tick steps = 0;
  do {
    step();
    ++steps;
  } while (!quiescent() && steps < max_ticks);
  if (!quiescent()) {
    throw SimError(SimError::Code::NotQuiescent,
                   "not quiescent after " + std::to_string(max_ticks) + " ticks");
  }
  return log_;
}

bool SimWorld::converged() const {
  const chain::Chain& first = nodes_.front().ledger.chain();
  return std::ranges::all_of(nodes_, [&](const SimNode& n) {
    const chain::Chain& c = n.ledger.chain();
    return c.length() == first.length() && c.tip_digest() == first.tip_digest();
  });
}

}  // namespace medledger::sim
