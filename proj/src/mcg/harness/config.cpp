#include "mcg/harness/config.hpp"

#include <cstdlib>
#include <fstream>

namespace mcg::harness {

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
  return from_json(j);
}

Config Config::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  Config c;
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array())
      throw ConfigError("config values must be scalars (flat key paths); "
                        "offending key: " + key);
    c.kv_[key] = value;
  }
  return c;
}

void Config::set(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded() || value.is_object() || value.is_array())
    value = raw;  // plain string
  set(key, value);
}

void Config::set(const std::string& key, const nlohmann::json& value) {
  if (value.is_object() || value.is_array())
    throw ConfigError("config values must be scalars; key: " + key);
  kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

const nlohmann::json* Config::find(const std::string& key) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? nullptr : &it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(key + " must be a string");
  return v->get<std::string>();
}

std::string Config::require_string(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key: " + key);
  return get_string(key, "");
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError(key + " must be a number");
  return v->get<double>();
}

double Config::require_double(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key: " + key);
  return get_double(key, 0.0);
}

long Config::get_int(const std::string& key, long fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!v->is_number_integer())
    throw ConfigError(key + " must be an integer");
  return v->get<long>();
}

long Config::require_int(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key: " + key);
  return get_int(key, 0);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(key + " must be a boolean");
  return v->get<bool>();
}

std::string Config::output_dir() const {
  if (const char* env = std::getenv("MCG_OUTPUT_DIR"); env && *env)
    return env;
  return get_string("output.dir", ".");
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : kv_) j[k] = v;
  return j;
}

}  // namespace mcg::harness
