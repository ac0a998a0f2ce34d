#include "qfvs/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qfvs/checkpoint.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::size_t parse_size(const std::string& key, const std::string& text) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + text + "'");
    return v;
}

real parse_real(const std::string& key, const std::string& text) {
    real v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw ConfigError("config key " + key + ": expected a number, got '" + text + "'");
    return v;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
    return out;
}

std::string format_real(real v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_size_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read config " + path.string());
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write config " + path.string());
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

}  // namespace qfvs
