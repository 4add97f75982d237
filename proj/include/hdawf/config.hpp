#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdawf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat `section.key = value` configuration. Later assignments override
// earlier ones; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<memory>");
KeyValues load_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

std::string format_real(double v);

bool parse_bool(const std::string& key, const std::string& v);
std::int64_t parse_int(const std::string& key, const std::string& v);
std::size_t parse_count(const std::string& key, const std::string& v);
double parse_real(const std::string& key, const std::string& v);
std::vector<std::string> split_list(const std::string& v, char sep = ',');

}  // namespace hdawf
