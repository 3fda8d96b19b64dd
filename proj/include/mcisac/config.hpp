#pragma once

#include <charconv>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mcisac/errors.hpp"
#include "mcisac/linalg.hpp"

namespace mcisac {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Parses one scalar token as complex: "1.5", "2i", "1+2i", "-3.1-4e-2i".
inline cxd parse_complex_token(const std::string& tok, const std::string& where) {
    std::string t = trim(tok);
    if (t.empty()) throw ConfigError(where, "empty numeric value");
    const char* p = t.c_str();
    const char* end = p + t.size();
    auto read_num = [&](const char*& q) -> double {
        char* stop = nullptr;
        double v = std::strtod(q, &stop);
        if (stop == q) throw ConfigError(where, "cannot parse number in '" + t + "'");
        q = stop;
        return v;
    };
    const char* q = p;
    double first = read_num(q);
    if (q == end) return {first, 0.0};
    if (*q == 'i' && q + 1 == end) return {0.0, first};
    // expect second signed number followed by 'i'
    double second = read_num(q);
    if (q != end && *q == 'i' && q + 1 == end) return {first, second};
    throw ConfigError(where, "malformed complex value '" + t + "'");
}

// Splits a bracketed list "[a, b, [c, d]]" into top-level element strings.
inline std::vector<std::string> split_list(const std::string& s, const std::string& where) {
    std::string t = trim(s);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        throw ConfigError(where, "expected a [...] list, got '" + t + "'");
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (size_t i = 1; i + 1 < t.size(); ++i) {
        char c = t[i];
        if (c == '[') depth++;
        if (c == ']') depth--;
        if (depth < 0) throw ConfigError(where, "unbalanced brackets");
        if (c == ',' && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (depth != 0) throw ConfigError(where, "unbalanced brackets");
    std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    return out;
}

} // namespace detail

/// Ordered key/value document with [section] groups; the config-file and
/// results-file format. Values are kept raw and parsed by typed accessors.
class ConfigDoc {
public:
    ConfigDoc() = default;

    static ConfigDoc parse(const std::string& text) {
        ConfigDoc doc;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = detail::trim(line);
            size_t hash = t.find('#');
            if (hash != std::string::npos) t = detail::trim(t.substr(0, hash));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("", "line " + std::to_string(lineno) + ": bad section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                doc.touch_section(section);
                continue;
            }
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
            std::string key = detail::trim(t.substr(0, eq));
            std::string val = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
            doc.set(section, key, val);
        }
        return doc;
    }

    static ConfigDoc parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("", "cannot open config file: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& section, const std::string& key, const std::string& raw) {
        auto& sec = touch_section(section);
        for (auto& kv : sec)
            if (kv.first == key) {
                kv.second = raw;
                return;
            }
        sec.emplace_back(key, raw);
    }

    /// Applies a dotted override "section.key=value".
    void apply_override(const std::string& spec) {
        size_t eq = spec.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "override must be section.key=value: " + spec);
        std::string path = detail::trim(spec.substr(0, eq));
        std::string val = detail::trim(spec.substr(eq + 1));
        size_t dot = path.find('.');
        if (dot == std::string::npos)
            throw ConfigError("", "override key must be dotted section.key: " + spec);
        set(path.substr(0, dot), path.substr(dot + 1), val);
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto* sec = find_section(section);
        if (!sec) return false;
        for (const auto& kv : *sec)
            if (kv.first == key) return true;
        return false;
    }

    std::string raw(const std::string& section, const std::string& key) const {
        const auto* sec = find_section(section);
        if (sec)
            for (const auto& kv : *sec)
                if (kv.first == key) return kv.second;
        throw ConfigError(section + "." + key, "missing required key");
    }

    std::string get_string(const std::string& section, const std::string& key) const {
        return raw(section, key);
    }

    double get_double(const std::string& section, const std::string& key) const {
        const std::string w = section + "." + key;
        cxd z = detail::parse_complex_token(raw(section, key), w);
        if (z.imag() != 0.0) throw ConfigError(w, "expected a real number");
        return z.real();
    }

    long get_int(const std::string& section, const std::string& key) const {
        double v = get_double(section, key);
        long r = static_cast<long>(v);
        if (static_cast<double>(r) != v)
            throw ConfigError(section + "." + key, "expected an integer");
        return r;
    }

    bool get_bool(const std::string& section, const std::string& key) const {
        std::string v = raw(section, key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(section + "." + key, "expected true/false");
    }

    std::vector<double> get_list(const std::string& section, const std::string& key) const {
        const std::string w = section + "." + key;
        std::vector<double> out;
        for (const auto& tok : detail::split_list(raw(section, key), w)) {
            cxd z = detail::parse_complex_token(tok, w);
            if (z.imag() != 0.0) throw ConfigError(w, "expected real entries");
            out.push_back(z.real());
        }
        return out;
    }

    std::vector<cxd> get_complex_list(const std::string& section, const std::string& key) const {
        const std::string w = section + "." + key;
        std::vector<cxd> out;
        for (const auto& tok : detail::split_list(raw(section, key), w))
            out.push_back(detail::parse_complex_token(tok, w));
        return out;
    }

    MatR get_matrix(const std::string& section, const std::string& key) const {
        const std::string w = section + "." + key;
        auto rows = detail::split_list(raw(section, key), w);
        MatR m;
        for (size_t i = 0; i < rows.size(); ++i) {
            auto cols = detail::split_list(rows[i], w);
            if (i == 0) m.resize(rows.size(), cols.size());
            if (static_cast<Eigen::Index>(cols.size()) != m.cols())
                throw ConfigError(w, "ragged matrix rows");
            for (size_t j = 0; j < cols.size(); ++j) {
                cxd z = detail::parse_complex_token(cols[j], w);
                if (z.imag() != 0.0) throw ConfigError(w, "expected real entries");
                m(i, j) = z.real();
            }
        }
        return m;
    }

    MatC get_complex_matrix(const std::string& section, const std::string& key) const {
        const std::string w = section + "." + key;
        auto rows = detail::split_list(raw(section, key), w);
        MatC m;
        for (size_t i = 0; i < rows.size(); ++i) {
            auto cols = detail::split_list(rows[i], w);
            if (i == 0) m.resize(rows.size(), cols.size());
            if (static_cast<Eigen::Index>(cols.size()) != m.cols())
                throw ConfigError(w, "ragged matrix rows");
            for (size_t j = 0; j < cols.size(); ++j)
                m(i, j) = detail::parse_complex_token(cols[j], w);
        }
        return m;
    }

    std::string serialize() const {
        std::string out;
        for (const auto& s : order_) {
            out += "[" + s + "]\n";
            for (const auto& kv : sections_.at(s))
                out += kv.first + " = " + kv.second + "\n";
            out += "\n";
        }
        return out;
    }

    void write_file(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw ConfigError("", "cannot write file: " + path);
        f << serialize();
    }

    const std::vector<std::string>& sections() const { return order_; }

private:
    using Section = std::vector<std::pair<std::string, std::string>>;

    Section& touch_section(const std::string& name) {
        auto it = sections_.find(name);
        if (it == sections_.end()) {
            order_.push_back(name);
            return sections_[name];
        }
        return it->second;
    }

    const Section* find_section(const std::string& name) const {
        auto it = sections_.find(name);
        return it == sections_.end() ? nullptr : &it->second;
    }

    std::map<std::string, Section> sections_;
    std::vector<std::string> order_;
};

} // namespace mcisac
