#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace mmhs {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // the command ran and did not reach its goal
inline constexpr int kExitUsage = 2;    // bad flags or config; nothing was written

// `mmhs <ingest|train|evaluate|ablate|report|version> --config FILE [--out DIR]
// [--seed N] [--checkpoint FILE]`. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Creates `<base>/<command>-YYYYmmdd-HHMMSS[-k]`, never reusing a directory.
std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& command);

}  // namespace mmhs
