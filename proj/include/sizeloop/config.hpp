#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "sizeloop/units.hpp"

namespace sizeloop {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Flat `key = value` config file. Keys are case-insensitive (stored lower),
/// values keep their raw text; numeric getters apply SPICE unit suffixes.
/// Lines starting with '#' or '*' are comments; inline '#' comments allowed.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string t = trim(line);
            if (t.empty() || t[0] == '*') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            std::string key = lower(trim(t.substr(0, eq)));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path);
    }

    [[nodiscard]] bool has(const std::string& key) const {
        return values_.count(lower(key)) > 0;
    }

    [[nodiscard]] std::optional<std::string> get_string(const std::string& key) const {
        auto it = values_.find(lower(key));
        if (it == values_.end() || it->second.empty()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::optional<double> get_number(const std::string& key) const {
        auto s = get_string(key);
        if (!s) return std::nullopt;
        auto v = try_parse_value(*s);
        if (!v) throw ConfigError(origin_ + ": key '" + key + "': malformed number '" + *s + "'");
        return v;
    }

    [[nodiscard]] double require_number(const std::string& key) const {
        auto v = get_number(key);
        if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return *v;
    }

    [[nodiscard]] std::string require_string(const std::string& key) const {
        auto v = get_string(key);
        if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return *v;
    }

    [[nodiscard]] double number_or(const std::string& key, double fallback) const {
        auto v = get_number(key);
        return v ? *v : fallback;
    }

    [[nodiscard]] std::string string_or(const std::string& key, const std::string& fallback) const {
        auto v = get_string(key);
        return v ? *v : fallback;
    }

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }
    [[nodiscard]] const std::string& origin() const { return origin_; }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }
    static std::string lower(const std::string& s) {
        std::string out = s;
        for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    }

    std::map<std::string, std::string> values_;
    std::string origin_ = "<empty>";
};

} // namespace sizeloop
