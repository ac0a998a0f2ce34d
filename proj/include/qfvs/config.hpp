#pragma once

// Flat `key = value` config files: one pair per line, '#' starts a comment.
// Lists are comma separated.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qfvs/real.hpp"

namespace qfvs {

using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

// Parse errors are ConfigError naming `key`.
std::size_t parse_size(const std::string& key, const std::string& text);
real parse_real(const std::string& key, const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text);

std::string format_real(real v);  // round-trips exactly
std::string format_size_list(const std::vector<std::size_t>& v);

}  // namespace qfvs
