#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sprim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Entry point of the sprim command line tool. `args` excludes the program
// name. Returns the process exit status.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace sprim
