#include "dpflow/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dpflow {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_plain(const std::string& text)
{
    const std::string t = trim(text);
    if (t.empty())
        return std::nullopt;
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+')
        ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        return std::nullopt;
    return v;
}

// Line of every "key =" inside each section, for error messages.
std::map<std::string, std::map<std::string, int>> key_lines(const std::string& text)
{
    std::map<std::string, std::map<std::string, int>> out;
    std::istringstream in(text);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == ';' || t[0] == '#')
            continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq != std::string::npos)
            out[section].emplace(trim(t.substr(0, eq)), n);
    }
    return out;
}

} // namespace

std::optional<double> parse_number(const std::string& text)
{
    const auto slash = text.find('/');
    if (slash == std::string::npos)
        return parse_plain(text);
    const auto num = parse_plain(text.substr(0, slash));
    const auto den = parse_plain(text.substr(slash + 1));
    if (!num || !den || *den == 0.0)
        return std::nullopt;
    return *num / *den;
}

ConfigDocument ConfigDocument::parse(const std::string& text, const std::string& origin)
{
    // Strip full-line '#' comments and inline "; ..." or "# ..." tails; the
    // INI reader only knows full-line ';' comments.
    std::string cleaned;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            const std::string t = trim(line);
            if (!t.empty() && t[0] == '#') {
                cleaned += '\n';
                continue;
            }
            for (std::size_t i = 1; i < line.size(); ++i)
                if ((line[i] == ';' || line[i] == '#') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
                    line.erase(i);
                    break;
                }
            cleaned += line;
            cleaned += '\n';
        }
    }
    boost::property_tree::ptree tree;
    std::istringstream in(cleaned);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        std::ostringstream msg;
        msg << origin << ":" << e.line() << ": " << e.message();
        throw ParseError(msg.str());
    }

    ConfigDocument doc;
    doc.text_ = text;
    doc.origin_ = origin;
    const auto lines = key_lines(text);
    for (const auto& [section, child] : tree) {
        if (child.empty()) {
            std::ostringstream msg;
            msg << origin << ": key '" << section << "' appears outside any [section]";
            throw ParseError(msg.str());
        }
        for (const auto& [key, leaf] : child) {
            if (!leaf.empty())
                throw ParseError(origin + ": nested value under " + section + "." + key);
            int line = 0;
            if (const auto s = lines.find(section); s != lines.end())
                if (const auto k = s->second.find(key); k != s->second.end())
                    line = k->second;
            doc.entries_[section][key] = Entry{trim(leaf.data()), line};
        }
    }
    return doc;
}

ConfigDocument ConfigDocument::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

const ConfigDocument::Entry* ConfigDocument::find(const std::string& section, const std::string& key) const
{
    const auto s = entries_.find(section);
    if (s == entries_.end())
        return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end())
        return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
}

bool ConfigDocument::has(const std::string& section, const std::string& key) const
{
    return find(section, key) != nullptr;
}

std::optional<std::string> ConfigDocument::raw(const std::string& section, const std::string& key) const
{
    const Entry* e = find(section, key);
    if (!e)
        return std::nullopt;
    return e->value;
}

void ConfigDocument::bad_value(const std::string& section, const std::string& key,
                               const std::string& what) const
{
    const Entry* e = find(section, key);
    std::ostringstream msg;
    msg << origin_ << ":" << (e ? e->line : 0) << ": " << section << "." << key << " = '"
        << (e ? e->value : std::string()) << "': " << what;
    throw ParseError(msg.str());
}

std::string ConfigDocument::get_string(const std::string& section, const std::string& key,
                                       const std::string& fallback) const
{
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
}

double ConfigDocument::get_double(const std::string& section, const std::string& key, double fallback) const
{
    const Entry* e = find(section, key);
    if (!e)
        return fallback;
    const auto v = parse_number(e->value);
    if (!v)
        bad_value(section, key, "expected a number");
    return *v;
}

long ConfigDocument::get_int(const std::string& section, const std::string& key, long fallback) const
{
    const Entry* e = find(section, key);
    if (!e)
        return fallback;
    long v = 0;
    const std::string& t = e->value;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        bad_value(section, key, "expected an integer");
    return v;
}

bool ConfigDocument::get_bool(const std::string& section, const std::string& key, bool fallback) const
{
    const Entry* e = find(section, key);
    if (!e)
        return fallback;
    std::string t = e->value;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "yes" || t == "1" || t == "on")
        return true;
    if (t == "false" || t == "no" || t == "0" || t == "off")
        return false;
    bad_value(section, key, "expected true or false");
}

std::vector<double> ConfigDocument::get_doubles(const std::string& section, const std::string& key,
                                                const std::vector<double>& fallback) const
{
    const Entry* e = find(section, key);
    if (!e)
        return fallback;
    std::vector<double> out;
    std::istringstream in(e->value);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto v = parse_number(item);
        if (!v)
            bad_value(section, key, "expected a comma-separated list of numbers");
        out.push_back(*v);
    }
    if (out.empty())
        bad_value(section, key, "empty list");
    return out;
}

std::vector<std::string> ConfigDocument::unused_keys() const
{
    std::vector<std::string> out;
    for (const auto& [section, keys] : entries_)
        for (const auto& [key, entry] : keys) {
            const std::string full = section + "." + key;
            if (!used_.count(full))
                out.push_back(origin_ + ":" + std::to_string(entry.line) + ": " + full);
        }
    return out;
}

} // namespace dpflow
