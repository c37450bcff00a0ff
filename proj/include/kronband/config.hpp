/**
 * @file config.hpp
 * @brief Flat "key = value" text configs with [section] headers.
 *
 * Grammar (one construct per line):
 *
 *     # comment            (also ';' comments; trailing comments allowed)
 *     [section]            section header, names are [A-Za-z0-9_]+
 *     key = value          keys before any header belong to section ""
 *
 * Keys are unique within a section. Every lookup error names the field and
 * the line it came from.
 */
#pragma once

#include "kronband/core.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kronband
{

class Config
{
  public:
    struct Entry
    {
        std::string value;
        int line = 0;
    };

    static Config parse(std::istream& in, const std::string& origin = "<config>")
    {
        Config cfg;
        cfg.origin_ = origin;
        std::string section;
        std::string raw;
        int lineno = 0;
        while (std::getline(in, raw))
        {
            ++lineno;
            std::string line = strip_comment(raw);
            line = trim(line);
            if (line.empty())
                continue;
            if (line.front() == '[')
            {
                if (line.back() != ']')
                    throw ParameterError(cfg.where(lineno) + ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty() || !valid_name(section))
                    throw ParameterError(cfg.where(lineno) + ": invalid section name '" + section + "'");
                cfg.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParameterError(cfg.where(lineno) + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty() || !valid_name(key))
                throw ParameterError(cfg.where(lineno) + ": invalid key '" + key + "'");
            auto& sec = cfg.sections_[section];
            if (sec.count(key))
                throw ParameterError(cfg.where(lineno) + ": duplicate key '" + key + "' (first on line " +
                                     std::to_string(sec[key].line) + ")");
            sec[key] = Entry{value, lineno};
        }
        return cfg;
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<config>")
    {
        std::istringstream in(text);
        return parse(in, origin);
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError(path + ": cannot open config");
        return parse(in, path);
    }

    bool has_section(const std::string& s) const { return sections_.count(s) != 0; }

    bool has(const std::string& s, const std::string& key) const
    {
        const auto it = sections_.find(s);
        return it != sections_.end() && it->second.count(key);
    }

    const Entry* find(const std::string& s, const std::string& key) const
    {
        const auto it = sections_.find(s);
        if (it == sections_.end())
            return nullptr;
        const auto jt = it->second.find(key);
        return jt == it->second.end() ? nullptr : &jt->second;
    }

    std::string field(const std::string& s, const std::string& key) const
    {
        return s.empty() ? key : s + "." + key;
    }

    std::string where(int line) const { return origin_ + ":" + std::to_string(line); }

    /// Location prefix for errors about an existing key.
    std::string where(const std::string& s, const std::string& key) const
    {
        const Entry* e = find(s, key);
        return e ? where(e->line) + ": field '" + field(s, key) + "'" : origin_ + ": field '" + field(s, key) + "'";
    }

    std::string get_string(const std::string& s, const std::string& key) const
    {
        const Entry* e = find(s, key);
        if (!e)
            throw ParameterError(origin_ + ": missing required field '" + field(s, key) + "'");
        return e->value;
    }

    std::string get_string(const std::string& s, const std::string& key, const std::string& fallback) const
    {
        const Entry* e = find(s, key);
        return e ? e->value : fallback;
    }

    long long get_int(const std::string& s, const std::string& key) const
    {
        return to_int(s, key, get_string(s, key));
    }

    long long get_int(const std::string& s, const std::string& key, long long fallback) const
    {
        const Entry* e = find(s, key);
        return e ? to_int(s, key, e->value) : fallback;
    }

    double get_double(const std::string& s, const std::string& key) const
    {
        return to_double(s, key, get_string(s, key));
    }

    double get_double(const std::string& s, const std::string& key, double fallback) const
    {
        const Entry* e = find(s, key);
        return e ? to_double(s, key, e->value) : fallback;
    }

    std::vector<std::string> get_list(const std::string& s, const std::string& key) const
    {
        return split_list(get_string(s, key));
    }

    /// Integer list: "0,1,2", "0..5" (inclusive) or "0..10:2" (step).
    std::vector<int> get_int_list(const std::string& s, const std::string& key) const
    {
        std::vector<int> out;
        for (const auto& item : get_list(s, key))
        {
            const auto dots = item.find("..");
            if (dots == std::string::npos)
            {
                out.push_back(static_cast<int>(to_int(s, key, item)));
                continue;
            }
            const auto colon = item.find(':', dots);
            const long long lo = to_int(s, key, item.substr(0, dots));
            const long long hi = to_int(s, key, item.substr(dots + 2, colon == std::string::npos ? std::string::npos
                                                                                                 : colon - dots - 2));
            const long long step = colon == std::string::npos ? 1 : to_int(s, key, item.substr(colon + 1));
            if (step <= 0 || hi < lo)
                throw ParameterError(where(s, key) + ": invalid range '" + item + "'");
            for (long long v = lo; v <= hi; v += step)
                out.push_back(static_cast<int>(v));
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& s, const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& item : get_list(s, key))
            out.push_back(to_double(s, key, item));
        return out;
    }

    static std::vector<std::string> split_list(const std::string& v)
    {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream in(v);
        while (std::getline(in, cur, ','))
        {
            cur = trim(cur);
            if (!cur.empty())
                out.push_back(cur);
        }
        return out;
    }

    /// Fails on keys outside `allowed` so typos do not pass silently.
    void require_known(const std::string& s, const std::set<std::string>& allowed) const
    {
        const auto it = sections_.find(s);
        if (it == sections_.end())
            return;
        for (const auto& [key, entry] : it->second)
            if (!allowed.count(key))
                throw ParameterError(where(entry.line) + ": unknown field '" + field(s, key) + "'");
    }

    const std::string& origin() const { return origin_; }

  private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::string strip_comment(const std::string& s)
    {
        const auto pos = s.find_first_of("#;");
        return pos == std::string::npos ? s : s.substr(0, pos);
    }

    static bool valid_name(const std::string& s)
    {
        for (char c : s)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
                return false;
        return true;
    }

    long long to_int(const std::string& s, const std::string& key, const std::string& v) const
    {
        long long out = 0;
        const auto t = trim(v);
        const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
        if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
            throw ParameterError(where(s, key) + ": expected an integer, got '" + v + "'");
        return out;
    }

    double to_double(const std::string& s, const std::string& key, const std::string& v) const
    {
        double out = 0.0;
        const auto t = trim(v);
        const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
        if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
            throw ParameterError(where(s, key) + ": expected a number, got '" + v + "'");
        return out;
    }

    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

}  // namespace kronband
