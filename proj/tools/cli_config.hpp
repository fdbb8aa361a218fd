// Flat key=value run configuration for the command-line tool.
#ifndef POLYMERLAB_TOOLS_CLI_CONFIG_HPP
#define POLYMERLAB_TOOLS_CLI_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace polymer::cli {

struct KeySpec {
    const char* name;
    const char* fallback;
    const char* help;
    bool operational; // excluded from the config hash (does not change outputs)
};

const std::vector<KeySpec>& key_specs();
bool is_known_key(const std::string& key);

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// malformed lines throw ConfigError naming the file and line.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin);
/// Key=value file, or a JSON run manifest (its "config" object).
std::map<std::string, std::string> read_config_file(const std::string& path, std::string* subcommand = nullptr);

class RunConfig {
public:
    RunConfig();

    void set(const std::string& key, const std::string& value);
    const std::string& str(const std::string& key) const;

    double real(const std::string& key) const;
    double nonneg(const std::string& key) const;
    long long integer(const std::string& key, long long lo, long long hi) const;
    std::uint64_t count(const std::string& key) const; // >= 1
    std::vector<double> reals(const std::string& key) const;
    std::vector<int> integers(const std::string& key) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    /// Sorted key=value lines of every key, one per line.
    std::string canonical(bool include_operational) const;
    /// FNV-1a over the subcommand and the non-operational keys, hex.
    std::string hash(const std::string& subcommand) const;

private:
    std::map<std::string, std::string> values_;
};

} // namespace polymer::cli

#endif
