#pragma once

// Plain-text `key = value` files: one pair per line, `#` starts a comment,
// blank lines ignored, later keys override earlier ones.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "etcb/error.hpp"

namespace etcb {

class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "<input>") {
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos)
        line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw InputError(origin + ":" + std::to_string(lineno) +
                         ": expected `key = value`");
      const std::string key = trim(trimmed.substr(0, eq));
      if (key.empty())
        throw InputError(origin + ":" + std::to_string(lineno) + ": empty key");
      kv.values_[key] = trim(trimmed.substr(eq + 1));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) {
    values_[key] = std::move(value);
  }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw InputError("missing config key: " + key);
    return it->second;
  }
  std::string get(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string& key) const {
    return to_double(get(key), key);
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  long long get_int(const std::string& key) const {
    return to_int(get(key), key);
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("config key " + key + " expects a boolean, got: " + v);
  }
  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& tok : split(get(key))) out.push_back(to_double(tok, key));
    return out;
  }
  std::vector<long long> get_ints(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& tok : split(get(key))) {
      // `a:b:c` expands to the arithmetic range a, a+b, ..., <= c
      if (const auto c1 = tok.find(':'); c1 != std::string::npos) {
        const auto c2 = tok.find(':', c1 + 1);
        if (c2 == std::string::npos)
          throw InputError("range in " + key + " must be start:step:stop");
        const long long a = to_int(tok.substr(0, c1), key);
        const long long step = to_int(tok.substr(c1 + 1, c2 - c1 - 1), key);
        const long long b = to_int(tok.substr(c2 + 1), key);
        if (step <= 0) throw InputError("range step in " + key + " must be positive");
        for (long long v = a; v <= b; v += step) out.push_back(v);
      } else {
        out.push_back(to_int(tok, key));
      }
    }
    return out;
  }
  std::vector<std::string> get_words(const std::string& key) const {
    return split(get(key));
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ' ' || ch == '\t' || ch == ',' || ch == ';') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  static double to_double(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InputError("config key " + key + " expects a number, got: " + s);
    }
  }
  static long long to_int(const std::string& s, const std::string& key) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
      throw InputError("config key " + key + " expects an integer, got: " + s);
    return v;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace etcb
