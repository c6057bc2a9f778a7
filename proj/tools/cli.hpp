#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seismo::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kTrainingAbort = 4,
  kArtifactMismatch = 5,
};

inline constexpr const char* kEnvPrefix = "SEISMOFORGE_";

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Process environment via std::getenv.
EnvLookup process_env();

// Parses `key = value` lines. '#' starts a comment, `[name]` opens a section
// whose keys apply only to the subcommand `name`. Keys are normalised to
// lower case with '-' separators. Throws FormatError on malformed lines.
struct ConfigFile {
  std::map<std::string, std::string> global;
  std::map<std::string, std::map<std::string, std::string>> sections;

  // Section value over global value.
  std::optional<std::string> lookup(const std::string& subcommand, const std::string& key) const;
};
ConfigFile parse_config(std::istream& is, const std::string& origin);
ConfigFile load_config(const std::string& path);

// SEISMOFORGE_ + upper-cased key with '-' replaced by '_'.
std::string env_name(const std::string& key);

// Runs one invocation. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const EnvLookup& env);

}  // namespace seismo::cli
