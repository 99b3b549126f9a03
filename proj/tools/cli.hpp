#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace medledger::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  // verification or convergence failure
inline constexpr int kExitUsage = 2;   // bad arguments or IO

// Runs `medledger <args...>`; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace medledger::cli
