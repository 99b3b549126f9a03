#include "medledger/sim/scenario.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace medledger::sim {

namespace {

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

class LineParser {
 public:
  LineParser(std::size_t line, std::vector<std::string> words) : line_(line), words_(std::move(words)) {}

  [[noreturn]] void fail(const std::string& message) const { throw ScenarioError(line_, message); }

  bool done() const { return pos_ == words_.size(); }
  const std::string& peek() const {
    if (done()) fail("unexpected end of line");
    return words_[pos_];
  }
  std::string word() {
    const std::string& w = peek();
    ++pos_;
    return w;
  }
  void keyword(std::string_view expected) {
    if (word() != expected) fail("expected '" + std::string(expected) + "'");
  }
  std::uint64_t number() {
    const std::string w = word();
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || ptr != w.data() + w.size()) fail("expected a number, got '" + w + "'");
    return v;
  }
  std::uint32_t node() {
    const std::uint64_t v = number();
    if (v > UINT32_MAX) fail("node id out of range");
    return static_cast<std::uint32_t>(v);
  }
  void end() const {
    if (!done()) fail("unexpected '" + words_[pos_] + "'");
  }

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
  std::vector<std::string> words_;
  std::size_t pos_ = 0;
};

std::set<NodeId> parse_group(LineParser& p, const std::string& text) {
  std::set<NodeId> group;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    LineParser one(p.line(), {item});
    group.insert(one.node());
  }
  if (group.empty()) p.fail("empty partition group");
  return group;
}

// "partition 0,1 | 2,3,4 from 0 to 80". Groups may also be written with
// spaces around the bar or without it ("partition 0,1 2,3,4").
Partition parse_partition(LineParser& p) {
  Partition part;
  while (!p.done() && p.peek() != "from") {
    std::string w = p.word();
    std::istringstream in(w);
    for (std::string piece; std::getline(in, piece, '|');) {
      if (!piece.empty()) part.groups.push_back(parse_group(p, piece));
    }
  }
  if (part.groups.size() < 2) p.fail("partition needs at least two groups");
  p.keyword("from");
  part.from_tick = p.number();
  if (!p.done()) {
    p.keyword("to");
    part.to_tick = p.number();
  }
  p.end();
  return part;
}

ScriptEvent parse_action(LineParser& p, Tick tick) {
  ScriptEvent ev;
  ev.tick = tick;
  const std::string what = p.word();
  if (what == "node") {
    ev.node = p.node();
    p.keyword("mine");
    ev.kind = ScriptKind::Mine;
    if (!p.done()) {
      const std::uint64_t count = p.number();
      if (count == 0 || count > 100000) p.fail("mine count must be in 1..=100000");
      ev.count = static_cast<std::uint32_t>(count);
    }
  } else if (what == "tx") {
    ev.node = p.node();
    p.keyword("register");
    ev.kind = ScriptKind::Register;
    ev.name = p.word();
    try {
      ev.role = chain::parse_role(p.word());
    } catch (const std::invalid_argument&) {
      p.fail("unknown role");
    }
  } else if (what == "inject") {
    ev.node = p.node();
    p.keyword("bad");
    ev.kind = ScriptKind::InjectBad;
  } else {
    p.fail("unknown directive '" + what + "'");
  }
  p.end();
  return ev;
}

}  // namespace

ScenarioError::ScenarioError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

Scenario parse_scenario(std::istream& in) {
  Scenario sc;
  std::size_t lineno = 0;
  // (line, node) for every node reference, checked once `nodes` is known.
  std::vector<std::pair<std::size_t, NodeId>> refs;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    auto words = split_words(raw);
    if (words.empty()) continue;
    LineParser p(lineno, std::move(words));
    const std::string head = p.peek();
    if (head == "nodes") {
      p.word();
      const std::uint64_t n = p.number();
      if (n < 1 || n > 1024) p.fail("nodes must be in 1..=1024");
      sc.config.n_nodes = static_cast<std::uint32_t>(n);
      p.end();
    } else if (head == "difficulty") {
      p.word();
      const std::uint64_t d = p.number();
      if (d > chain::kMaxDifficultyBits) p.fail("difficulty must be in 0..=32");
      sc.config.difficulty_bits = static_cast<std::uint32_t>(d);
      p.end();
    } else if (head == "latency") {
      p.word();
      const std::uint64_t first = p.number();
      if (p.done()) {
        if (first < 1) p.fail("latency must be at least 1");
        sc.config.default_latency = first;
      } else {
        if (first > UINT32_MAX) p.fail("node id out of range");
        const NodeId a = static_cast<NodeId>(first);
        const NodeId b = p.node();
        const std::uint64_t ticks = p.number();
        p.end();
        if (ticks < 1) p.fail("latency must be at least 1");
        if (a == b) p.fail("latency pair must name two nodes");
        sc.config.latency[{std::min(a, b), std::max(a, b)}] = ticks;
        refs.emplace_back(lineno, a);
        refs.emplace_back(lineno, b);
      }
    } else if (head == "trials") {
      p.word();
      const std::uint64_t t = p.number();
      if (t < 1) p.fail("trials must be at least 1");
      sc.config.trials_per_tick = t;
      p.end();
    } else if (head == "seed") {
      p.word();
      sc.config.rng_seed = p.number();
      p.end();
    } else if (head == "partition") {
      p.word();
      Partition part = parse_partition(p);
      if (part.to_tick && *part.to_tick <= part.from_tick) p.fail("partition must end after it starts");
      std::set<NodeId> seen;
      for (const auto& g : part.groups) {
        for (NodeId id : g) {
          if (!seen.insert(id).second) p.fail("node " + std::to_string(id) + " is in two groups");
          refs.emplace_back(lineno, id);
        }
      }
      sc.config.partitions.push_back(std::move(part));
    } else if (head == "at") {
      p.word();
      const Tick t = p.number();
      sc.script.push_back(parse_action(p, t));
      refs.emplace_back(lineno, sc.script.back().node);
    } else {
      sc.script.push_back(parse_action(p, 0));
      refs.emplace_back(lineno, sc.script.back().node);
    }
  }
  for (const auto& [line, id] : refs) {
    if (id >= sc.config.n_nodes) throw ScenarioError(line, "unknown node " + std::to_string(id));
  }
  return sc;
}

Scenario parse_scenario_text(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path.string());
  return parse_scenario(in);
}

}  // namespace medledger::sim
