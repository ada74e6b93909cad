#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cosettle {

/// Reads `key = value` lines. Blank lines and lines starting with '#' are skipped.
/// Throws ParameterError on a line without '=' (message carries the line number).
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

double parse_real(const std::string& key, const std::string& value);
std::size_t parse_count(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

/// Comma-separated reals, e.g. "1, 2.5, 3".
std::vector<double> parse_real_list(const std::string& key, const std::string& value);

}  // namespace cosettle
