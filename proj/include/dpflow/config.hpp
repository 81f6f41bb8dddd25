#pragma once
// INI-style scenario files: [section] or [section.sub] headers, key = value
// lines, ';' or '#' comments. Every key read is remembered so that leftover
// keys can be reported as typos.

#include "dpflow/error.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dpflow {

class ParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ConfigDocument {
public:
    static ConfigDocument parse(const std::string& text, const std::string& origin = "<string>");
    static ConfigDocument load(const std::string& path);

    const std::string& text() const { return text_; }
    const std::string& origin() const { return origin_; }

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> raw(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // Comma-separated numbers; entries may be fractions such as 1/8.
    std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                    const std::vector<double>& fallback) const;

    // "section.key" entries present in the file but never read.
    std::vector<std::string> unused_keys() const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    [[noreturn]] void bad_value(const std::string& section, const std::string& key,
                                const std::string& what) const;
    const Entry* find(const std::string& section, const std::string& key) const;

    std::string text_;
    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> entries_;
    mutable std::set<std::string> used_;
};

// Parses one number; accepts "a/b" fractions.
std::optional<double> parse_number(const std::string& text);

} // namespace dpflow
