#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNoConvergence = 4;

struct RunManifest {
  std::string command_line;
  /// FNV-1a over the arguments and the bytes of every input file.
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string tool_version;
  double wall_time_seconds = 0.0;
  std::string started_at;
  std::vector<std::string> outputs;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// args excludes the program name. "-" as an output path means `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace mmr
