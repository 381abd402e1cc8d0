#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "subcond/common.hpp"

namespace cli {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// RFC-4180 quoting
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  std::string csv(const std::vector<std::string>& header_comments) const {
    std::ostringstream o;
    for (const auto& c : header_comments) o << "# " << c << "\r\n";
    for (std::size_t i = 0; i < columns.size(); ++i) o << (i ? "," : "") << csv_field(columns[i]);
    o << "\r\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << csv_field(r[i]);
      o << "\r\n";
    }
    return o.str();
  }

  nlohmann::json json() const {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json obj = nlohmann::json::object();
      for (std::size_t i = 0; i < columns.size(); ++i) obj[columns[i]] = r[i];
      arr.push_back(obj);
    }
    return arr;
  }
};

// Flat JSON object whose keys are long option names; '_' and '-' are
// interchangeable. Values fill options not given on the command line.
// Throws ConfigError on anything it cannot place.
inline void apply_config(const std::string& path, const std::vector<CLI::App*>& scopes) {
  std::ifstream in(path);
  if (!in) throw subcond::ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw subcond::ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw subcond::ConfigError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    for (char& c : name)
      if (c == '_') c = '-';
    if (name == "config") throw subcond::ConfigError("config: nested config is not allowed");
    CLI::Option* opt = nullptr;
    for (auto* app : scopes)
      if ((opt = app->get_option_no_throw("--" + name))) break;
    if (!opt) throw subcond::ConfigError("config: unknown key '" + key + "'");
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_number() || value.is_boolean()) text = value.dump();
    else throw subcond::ConfigError("config: key '" + key + "' must be a scalar");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(text);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw subcond::ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
}

}  // namespace cli
