#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace odd::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kConfig = 2;
inline constexpr int kRuntime = 3;

// Environment variable naming the default run-config file.
inline constexpr const char* kConfigEnv = "ODD_CONFIG";

// Entry point of the `odd` tool; args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace odd::cli
