#include "cosettle/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cosettle/error.hpp"

namespace cosettle {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ParameterError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open config file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), trim(t.substr(eq + 1)));
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    std::istringstream in(v);
    in.imbue(std::locale::classic());
    double x = 0.0;
    if (v.empty() || !(in >> x) || !in.eof()) bad_value(key, value, "a real number");
    return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
        bad_value(key, value, "an unsigned integer");
    }
    return x;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_u64(key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, value, "a boolean");
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
    if (out.empty()) bad_value(key, value, "a comma-separated list of reals");
    return out;
}

}  // namespace cosettle
