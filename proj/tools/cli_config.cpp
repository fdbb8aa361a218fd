#include "cli_config.hpp"

#include "polymerlab/checkpoint.hpp"
#include "polymerlab/errors.hpp"

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace polymer::cli {

const std::vector<KeySpec>& key_specs()
{
    static const std::vector<KeySpec> specs{
        {"env.family", "gaussian", "gaussian | two_point | uniform", false},
        {"env.a", "-1", "two-point lower value", false},
        {"env.b", "1", "two-point upper value", false},
        {"env.p", "0.5", "two-point mass on env.a", false},
        {"env.lo", "-1", "uniform lower end", false},
        {"env.hi", "1", "uniform upper end", false},
        {"walk.kind", "srw", "srw | nu1 | nu2", false},
        {"walk.d", "3", "lattice dimension", false},
        {"walk.rmax", "0", "heavy-tail truncation radius (0 = default)", false},
        {"walk.quad_points", "32", "initial quadrature points for return probabilities", false},
        {"walk.horizon", "10000", "horizon of the return-probability series", false},
        {"field.mode", "point", "point | plane", false},
        {"field.box", "0", "plane mode periodic box half-width (0 = dependency cone)", false},
        {"field.nmax", "200", "time horizon for suprema, overshoot and localization", false},
        {"run.beta", "0.3", "inverse temperature", false},
        {"run.A", "2,4,8,16", "overshoot levels", false},
        {"run.u", "4", "localization levels", false},
        {"run.delta", "0.1,0.03,0.01", "localization thresholds", false},
        {"run.p", "2", "moment order", false},
        {"run.n", "20", "horizon for evolve, second-moment, spine-check, oracle-check", false},
        {"run.n_grid", "16,32,64,128", "horizons for moment-growth and fluct", false},
        {"run.R", "1000", "replica count", false},
        {"run.seed", "1", "master seed", false},
        {"run.k", "0", "Hill order statistics (0 = floor(sqrt R))", false},
        {"run.tol", "1e-10", "root / Green-integral tolerance", false},
        {"run.beta_max", "16", "upper end of the beta2 search", false},
        {"run.n_lo", "100", "critical-growth grid start", false},
        {"run.n_hi", "10000", "critical-growth grid end", false},
        {"run.points", "25", "critical-growth grid points", false},
        {"tail.u", "1.5,2,3", "supermultiplicativity grid", false},
        {"spine.g", "min_w_2", "one | min_w_2 | inv_1_plus_w | w_above_1", false},
        {"run.workers", "0", "worker threads (0 = POLYMERLAB_WORKERS or 1)", true},
        {"run.max_seconds", "0", "stop and checkpoint after this many seconds (0 = none)", true},
        {"out.dir", "out", "output directory", true},
        {"checkpoint.every", "10000", "checkpoint every this many replicas", true},
        {"checkpoint.seconds", "60", "checkpoint at least this often", true},
    };
    return specs;
}

bool is_known_key(const std::string& key)
{
    for (const auto& s : key_specs()) {
        if (key == s.name) return true;
    }
    return false;
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double parse_real(const std::string& key, const std::string& text)
{
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0' || errno == ERANGE || std::isnan(v)) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

long long parse_integer(const std::string& key, const std::string& text)
{
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (text.empty() || *end != '\0' || errno == ERANGE) {
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    }
    return v;
}

} // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin)
{
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    int number = 0;
    while (std::getline(ss, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(number);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!is_known_key(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path, std::string* subcommand)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (trim(text).rfind('{', 0) != 0) return parse_config_text(text, path);

    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("config") || !j["config"].is_object()) {
        throw ConfigError(path + ": not a run manifest");
    }
    if (subcommand && j.contains("subcommand")) *subcommand = j["subcommand"].get<std::string>();
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : j["config"].items()) {
        if (!is_known_key(key)) throw ConfigError(path + ": unknown config key '" + key + "'");
        if (!value.is_string()) throw ConfigError(path + ": config value of '" + key + "' must be a string");
        out[key] = value.get<std::string>();
    }
    return out;
}

RunConfig::RunConfig()
{
    for (const auto& s : key_specs()) values_[s.name] = s.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    if (!is_known_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

const std::string& RunConfig::str(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, str(key)); }

double RunConfig::nonneg(const std::string& key) const
{
    const double v = real(key);
    if (!(v >= 0.0)) throw ConfigError(key + " must be nonnegative, got " + str(key));
    return v;
}

long long RunConfig::integer(const std::string& key, long long lo, long long hi) const
{
    const long long v = parse_integer(key, str(key));
    if (v < lo || v > hi) {
        throw ConfigError(key + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                          str(key));
    }
    return v;
}

std::uint64_t RunConfig::count(const std::string& key) const
{
    return static_cast<std::uint64_t>(integer(key, 1, 1LL << 40));
}

std::vector<double> RunConfig::reals(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& item : split_list(str(key))) out.push_back(parse_real(key, item));
    if (out.empty()) throw ConfigError(key + " must not be empty");
    return out;
}

std::vector<int> RunConfig::integers(const std::string& key) const
{
    std::vector<int> out;
    for (const auto& item : split_list(str(key))) {
        const long long v = parse_integer(key, item);
        if (v < 1 || v > 1000000) throw ConfigError(key + ": entries must lie in [1, 1000000], got " + item);
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ConfigError(key + " must not be empty");
    return out;
}

std::string RunConfig::canonical(bool include_operational) const
{
    std::string out;
    for (const auto& [key, value] : values_) {
        bool operational = false;
        for (const auto& s : key_specs()) {
            if (key == s.name) operational = s.operational;
        }
        if (operational && !include_operational) continue;
        out += key + "=" + value + "\n";
    }
    return out;
}

std::string RunConfig::hash(const std::string& subcommand) const
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(subcommand + "\n" + canonical(false))));
    return buf;
}

} // namespace polymer::cli
