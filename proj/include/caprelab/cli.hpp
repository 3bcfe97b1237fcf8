#pragma once

// Command-line front end. Exit codes: 0 ok, 1 property violation, 2 input
// error, 3 runtime error.

#include <ostream>
#include <string>
#include <vector>

namespace caprelab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace caprelab
