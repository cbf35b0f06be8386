// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` configuration with `[section]` headers. Keys are stored
// as "section.key"; later assignments override earlier ones, so appending
// overrides to a snapshot reproduces the effective configuration.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/hash.hpp"

namespace sgm {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, const std::string& origin = "<string>") {
        Config c;
        c.text_ = text;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw Error(ErrorCode::Config, origin + ":" + std::to_string(lineno) + ": bad section header");
                section = trim(std::string_view(t).substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorCode::Config, origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(std::string_view(t).substr(0, eq));
            if (key.empty()) throw Error(ErrorCode::Config, origin + ":" + std::to_string(lineno) + ": empty key");
            c.values_[section.empty() ? key : section + "." + key] = trim(std::string_view(t).substr(eq + 1));
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Io, "config file not found: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    /// Applies "section.key=value"; the override is also appended to the snapshot text.
    void set(const std::string& dotted_key, const std::string& value) {
        values_[dotted_key] = value;
        const auto dot = dotted_key.find('.');
        overrides_ += dot == std::string::npos ? "[]\n" : "[" + dotted_key.substr(0, dot) + "]\n";
        overrides_ += (dot == std::string::npos ? dotted_key : dotted_key.substr(dot + 1)) + " = " + value + "\n";
    }

    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::Config, "override must look like section.key=value");
        set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
    }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

    [[nodiscard]] std::string get_string(const std::string& key, const std::string& def) const {
        const auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    [[nodiscard]] double get_double(const std::string& key, double def) const {
        const auto it = values_.find(key);
        return it == values_.end() ? def : to_double(key, it->second);
    }

    [[nodiscard]] std::uint64_t get_uint(const std::string& key, std::uint64_t def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::uint64_t v = 0;
        const auto& s = it->second;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size())
            throw Error(ErrorCode::Config, key + ": expected a nonnegative integer, got '" + s + "'");
        return v;
    }

    [[nodiscard]] bool get_bool(const std::string& key, bool def) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        const auto& s = it->second;
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw Error(ErrorCode::Config, key + ": expected a boolean, got '" + s + "'");
    }

    /// Comma-separated numbers.
    [[nodiscard]] std::vector<double> get_list(const std::string& key, std::vector<double> def = {}) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return def;
        return parse_list(key, it->second);
    }

    /// Rows separated by ';', entries by ','.
    [[nodiscard]] std::vector<std::vector<double>> get_rows(const std::string& key) const {
        std::vector<std::vector<double>> rows;
        std::stringstream ss(get_string(key, ""));
        std::string row;
        while (std::getline(ss, row, ';'))
            if (!trim(row).empty()) rows.push_back(parse_list(key, row));
        return rows;
    }

    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Verbatim input followed by the applied overrides.
    [[nodiscard]] std::string snapshot() const {
        if (overrides_.empty()) return text_;
        std::string s = text_;
        if (!s.empty() && s.back() != '\n') s += '\n';
        return s + "# overrides\n" + overrides_;
    }

    /// Sorted "key = value" lines; equal effective configurations hash equally.
    [[nodiscard]] std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
        return s;
    }

    [[nodiscard]] std::string hash() const { return hex64(fnv1a64(canonical())); }

    /// Rejects keys outside the schema (patterns are full-match regexes).
    void validate(const std::vector<std::string>& patterns) const {
        std::vector<std::regex> res;
        for (const auto& p : patterns) res.emplace_back(p);
        for (const auto& [k, v] : values_) {
            const bool ok = std::any_of(res.begin(), res.end(), [&](const std::regex& r) { return std::regex_match(k, r); });
            if (!ok) throw Error(ErrorCode::Config, "unknown config key '" + k + "'");
        }
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (trim(std::string_view(s).substr(pos)).empty()) return v;
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::Config, key + ": expected a number, got '" + s + "'");
    }

    static std::vector<double> parse_list(const std::string& key, const std::string& s) {
        std::vector<double> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(to_double(key, t));
        }
        return out;
    }

    std::string text_;
    std::string overrides_;
    std::map<std::string, std::string> values_;
};

}  // namespace sgm
