#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "medledger/sim/world.hpp"

namespace medledger::sim {

// Scenario files hold one directive per line; '#' starts a comment.
//
//   nodes 5
//   difficulty 8
//   latency 2              default link latency in ticks
//   latency 0 3 4          symmetric override for the pair 0-3
//   trials 64              nonce trials per miner per tick
//   seed 7
//   partition 0,1 | 2,3,4 from 0 to 80      ("to" omitted: permanent)
//   node 0 mine 3          at tick 0
//   at 5 node 2 mine       one block
//   at 5 tx 1 register alice patient
//   at 9 inject 4 bad      node 4 floods a block with a forged signature
struct Scenario {
  SimConfig config;
  std::vector<ScriptEvent> script;
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace medledger::sim
