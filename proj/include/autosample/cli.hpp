#pragma once

#include <string>
#include <vector>

namespace autosample {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// Entry point for the `autosample` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

// git-describe style build version.
std::string version_string();

}  // namespace autosample
