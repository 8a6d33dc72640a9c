// Minimal TOML reader covering the subset used by experiment configs:
// [section] headers, key = value pairs with strings, integers, floats,
// booleans and flat arrays, and # comments.  Errors carry line numbers.
#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cloaqc::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::string, long long, double, bool, Array> data;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_int() const { return std::holds_alternative<long long>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }

    const std::string& as_string() const { return std::get<std::string>(data); }
    long long as_int() const { return std::get<long long>(data); }
    double as_number() const
    {
        if (is_int()) return static_cast<double>(std::get<long long>(data));
        return std::get<double>(data);
    }
    bool as_bool() const { return std::get<bool>(data); }
    const Array& as_array() const { return std::get<Array>(data); }
};

class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what) {}
};

// Keys are flattened as "section.key".
class Table {
public:
    bool contains(const std::string& key) const { return values_.count(key) > 0; }

    const Value& at(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("missing config key '" + key + "'");
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const
    {
        return contains(key) ? at(key).as_string() : fallback;
    }
    double get_number(const std::string& key, double fallback) const
    {
        return contains(key) ? at(key).as_number() : fallback;
    }
    long long get_int(const std::string& key, long long fallback) const
    {
        return contains(key) ? at(key).as_int() : fallback;
    }
    bool get_bool(const std::string& key, bool fallback) const
    {
        return contains(key) ? at(key).as_bool() : fallback;
    }

    void set(const std::string& key, Value v) { values_[key] = std::move(v); }

    const std::map<std::string, Value>& entries() const { return values_; }

private:
    std::map<std::string, Value> values_;
};

namespace detail {

inline std::string strip(const std::string& s)
{
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Remove a trailing comment that is not inside a string literal.
inline std::string strip_comment(const std::string& s)
{
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

inline Value parse_scalar(const std::string& raw, int line)
{
    const std::string t = strip(raw);
    if (t.empty()) throw ParseError(line, "empty value");
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"') throw ParseError(line, "unterminated string");
        return Value{t.substr(1, t.size() - 2)};
    }
    if (t == "true") return Value{true};
    if (t == "false") return Value{false};
    const bool looks_float = t.find_first_of(".eE") != std::string::npos &&
                             t.find_first_not_of("+-0123456789.eE") == std::string::npos;
    try {
        std::size_t used = 0;
        if (!looks_float) {
            long long v = std::stoll(t, &used);
            if (used == t.size()) return Value{v};
        }
        double d = std::stod(t, &used);
        if (used == t.size()) return Value{d};
    } catch (const std::exception&) {
    }
    throw ParseError(line, "cannot parse value '" + t + "'");
}

inline Value parse_value(const std::string& raw, int line)
{
    const std::string t = strip(raw);
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']') throw ParseError(line, "unterminated array");
        Array arr;
        std::string body = t.substr(1, t.size() - 2);
        std::string cell;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                arr.push_back(parse_scalar(cell, line));
                cell.clear();
            } else {
                cell += c;
            }
        }
        if (!strip(cell).empty()) arr.push_back(parse_scalar(cell, line));
        return Value{std::move(arr)};
    }
    return parse_scalar(t, line);
}

} // namespace detail

inline Table parse(std::istream& in)
{
    Table table;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::strip(detail::strip_comment(line));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError(lineno, "unterminated section header");
            section = detail::strip(t.substr(1, t.size() - 2));
            if (section.empty()) throw ParseError(lineno, "empty section name");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
        const std::string key = detail::strip(t.substr(0, eq));
        if (key.empty()) throw ParseError(lineno, "empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        table.set(full, detail::parse_value(t.substr(eq + 1), lineno));
    }
    return table;
}

inline Table parse_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    return parse(f);
}

inline Table parse_string(const std::string& text)
{
    std::istringstream ss(text);
    return parse(ss);
}

} // namespace cloaqc::toml
