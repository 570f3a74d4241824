#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kge {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command. args excludes the program name, e.g.
// {"train", "--config", "run.cfg"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kge
