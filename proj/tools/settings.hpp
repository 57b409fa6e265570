#pragma once

// Per-command configuration keys, their defaults and the layering of
// defaults, manifest, config file and command-line values.

#include "slim/config.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace slim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every key a command understands, with its default value.
Config command_defaults(const std::string& command);

struct Sources {
  std::optional<std::string> manifest;
  std::optional<std::string> config_file;
  std::vector<std::string> assignments;            // "section.key=value"
  std::map<std::string, std::string> flag_values;  // from named flags
};

/// defaults < manifest < config file < --set < named flags. Unknown keys and
/// a manifest recorded for another command are usage errors.
Config resolve(const std::string& command, const Sources& sources);

}  // namespace slim::cli
