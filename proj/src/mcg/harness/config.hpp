#ifndef MCG_HARNESS_CONFIG_HPP
#define MCG_HARNESS_CONFIG_HPP

#include <json.hpp>
#include <map>
#include <string>

#include "mcg/errors.hpp"

namespace mcg::harness {

// Flat-key experiment configuration. The file is a single JSON object
// whose keys are dotted paths ("attack.epsilon") and whose values are
// scalars; nesting is rejected so that every setting has exactly one
// spelling. The MCG_OUTPUT_DIR environment variable overrides
// "output.dir" (and nothing else).
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_json(const nlohmann::json& j);

  // "key=value" override; the value is parsed as a JSON scalar when
  // possible and kept as a string otherwise.
  void set(const std::string& assignment);
  void set(const std::string& key, const nlohmann::json& value);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  long require_int(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // "output.dir" with the environment override applied; defaults to ".".
  std::string output_dir() const;

  const std::map<std::string, nlohmann::json>& entries() const {
    return kv_;
  }
  nlohmann::json to_json() const;

 private:
  const nlohmann::json* find(const std::string& key) const;
  std::map<std::string, nlohmann::json> kv_;
};

}  // namespace mcg::harness

#endif
