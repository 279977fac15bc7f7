#pragma once

// Configuration input and artifact output.  Configurations are flat typed
// scalars grouped into named sections, written either in the native text
// format ([section] headers, key = value lines, # comments) or as an
// equivalent JSON object of objects.  Readers keep raw values; accessors
// coerce on demand and throw SchemaError with the offending key, so the
// caller can map every malformed input to the schema exit path.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "partitia/text.hpp"

namespace partitia {

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace detail

// One raw configuration value.  Text-format files store the unparsed token;
// JSON files store the typed value, with integerness tracked so integer
// keys reject fractional input.
struct ConfigValue {
  enum class Kind { kText, kBool, kNumber, kString, kList };
  Kind kind = Kind::kText;
  std::string text;
  bool boolean = false;
  double number = 0.0;
  bool integral = false;
  std::vector<double> list;
};

class ConfigMap {
 public:
  // [section] headers with key = value lines; blank lines and lines starting
  // with # or ; are ignored; keys may not repeat.
  static ConfigMap parse_text(const std::string& src) {
    ConfigMap cfg;
    cfg.source_ = src;
    std::istringstream in(src);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3)
          throw SchemaError("config line " + format_u64(lineno) +
                            ": malformed section header");
        section = detail::trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw SchemaError("config line " + format_u64(lineno) +
                            ": empty section name");
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw SchemaError("config line " + format_u64(lineno) +
                          ": expected key = value");
      if (section.empty())
        throw SchemaError("config line " + format_u64(lineno) +
                          ": key before any [section]");
      std::string key = detail::trim(t.substr(0, eq));
      std::string val = detail::trim(t.substr(eq + 1));
      if (key.empty())
        throw SchemaError("config line " + format_u64(lineno) + ": empty key");
      ConfigValue v;
      v.kind = ConfigValue::Kind::kText;
      v.text = val;
      cfg.insert(section + "." + key, std::move(v));
    }
    return cfg;
  }

  // {"section": {"key": value}}; values may be bool, number, string, or an
  // array of numbers.
  static ConfigMap parse_json(const std::string& src) {
    nlohmann::json root;
    try {
      root = nlohmann::json::parse(src);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("config JSON parse error: ") + e.what());
    }
    if (!root.is_object())
      throw SchemaError("config JSON root must be an object of sections");
    ConfigMap cfg;
    cfg.source_ = src;
    for (auto sec = root.begin(); sec != root.end(); ++sec) {
      if (!sec.value().is_object())
        throw SchemaError("config section '" + sec.key() +
                          "' must be an object");
      for (auto kv = sec.value().begin(); kv != sec.value().end(); ++kv) {
        const std::string key = sec.key() + "." + kv.key();
        const auto& jv = kv.value();
        ConfigValue v;
        if (jv.is_boolean()) {
          v.kind = ConfigValue::Kind::kBool;
          v.boolean = jv.get<bool>();
        } else if (jv.is_number()) {
          v.kind = ConfigValue::Kind::kNumber;
          v.number = jv.get<double>();
          v.integral = jv.is_number_integer() || jv.is_number_unsigned();
        } else if (jv.is_string()) {
          v.kind = ConfigValue::Kind::kString;
          v.text = jv.get<std::string>();
        } else if (jv.is_array()) {
          v.kind = ConfigValue::Kind::kList;
          for (const auto& e : jv) {
            if (!e.is_number())
              throw SchemaError("config key '" + key +
                                "': arrays may hold numbers only");
            v.list.push_back(e.get<double>());
          }
        } else {
          throw SchemaError("config key '" + key + "': unsupported value type");
        }
        cfg.insert(key, std::move(v));
      }
    }
    return cfg;
  }

  // Dispatch on the file extension: .json parses as JSON, everything else as
  // the native text format.
  static ConfigMap load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string src = buf.str();
    const bool json = path.size() >= 5 &&
                      path.compare(path.size() - 5, 5, ".json") == 0;
    ConfigMap cfg = json ? parse_json(src) : parse_text(src);
    cfg.source_ = src;
    return cfg;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_) out.push_back(k);
    return out;
  }

  // Every present key must be in the allowed set.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : kv_) {
      if (!allowed.count(k)) throw SchemaError("unknown config key: " + k);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const ConfigValue& v = it->second;
    switch (v.kind) {
      case ConfigValue::Kind::kBool:
        return v.boolean;
      case ConfigValue::Kind::kText:
        if (v.text == "true") return true;
        if (v.text == "false") return false;
        break;
      default:
        break;
    }
    throw SchemaError("config key '" + key + "' must be true or false");
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return to_int(key, it->second);
  }

  std::int64_t require_int(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw SchemaError("missing config key: " + key);
    return to_int(key, it->second);
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return to_double(key, it->second);
  }

  double require_double(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw SchemaError("missing config key: " + key);
    return to_double(key, it->second);
  }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const ConfigValue& v = it->second;
    if (v.kind == ConfigValue::Kind::kText ||
        v.kind == ConfigValue::Kind::kString)
      return v.text;
    throw SchemaError("config key '" + key + "' must be a string");
  }

  std::string require_string(const std::string& key) const {
    if (!has(key)) throw SchemaError("missing config key: " + key);
    return get_string(key, "");
  }

  // Comma-separated numbers in the text format, an array in JSON; a single
  // number also reads as a one-entry list.
  std::vector<double> require_list(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw SchemaError("missing config key: " + key);
    const ConfigValue& v = it->second;
    if (v.kind == ConfigValue::Kind::kList) {
      if (v.list.empty())
        throw SchemaError("config key '" + key + "' must not be empty");
      return v.list;
    }
    if (v.kind == ConfigValue::Kind::kNumber) return {v.number};
    if (v.kind == ConfigValue::Kind::kText) {
      std::vector<double> out;
      for (const std::string& piece : detail::split(v.text, ',')) {
        if (piece.empty())
          throw SchemaError("config key '" + key + "': empty list entry");
        out.push_back(parse_double(key, piece));
      }
      if (out.empty())
        throw SchemaError("config key '" + key + "' must not be empty");
      return out;
    }
    throw SchemaError("config key '" + key + "' must be a list of numbers");
  }

  // Raw bytes of the file this map was loaded from; empty for parsed strings.
  const std::string& source() const { return source_; }

 private:
  void insert(const std::string& key, ConfigValue v) {
    if (!kv_.emplace(key, std::move(v)).second)
      throw SchemaError("duplicate config key: " + key);
  }

  static double parse_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw SchemaError("config key '" + key + "': '" + s +
                        "' is not a number");
    }
  }

  static std::int64_t to_int(const std::string& key, const ConfigValue& v) {
    if (v.kind == ConfigValue::Kind::kNumber) {
      if (!v.integral)
        throw SchemaError("config key '" + key + "' must be an integer");
      return static_cast<std::int64_t>(std::llround(v.number));
    }
    if (v.kind == ConfigValue::Kind::kText) {
      try {
        std::size_t pos = 0;
        long long x = std::stoll(v.text, &pos);
        if (pos != v.text.size())
          throw std::invalid_argument("trailing characters");
        return x;
      } catch (const std::exception&) {
        throw SchemaError("config key '" + key + "': '" + v.text +
                          "' is not an integer");
      }
    }
    throw SchemaError("config key '" + key + "' must be an integer");
  }

  static double to_double(const std::string& key, const ConfigValue& v) {
    if (v.kind == ConfigValue::Kind::kNumber) return v.number;
    if (v.kind == ConfigValue::Kind::kText) return parse_double(key, v.text);
    throw SchemaError("config key '" + key + "' must be a number");
  }

  std::map<std::string, ConfigValue> kv_;
  std::string source_;
};

// FNV-1a over the raw config bytes; artifacts carry this as provenance.
inline std::string config_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  return "fnv1a:" + std::string(buf, 16);
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace partitia
