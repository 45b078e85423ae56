#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hot/layer.hpp"
#include "json.hpp"

namespace hot {

/// Malformed or unknown configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         const std::string& where);

/// Typed lookup with a default; wrong types raise ConfigError naming the key.
template <typename T>
T get_or(const nlohmann::json& j, const char* key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_required(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return get_or<T>(j, key, T{}, where);
}

Pooling parse_pooling(const std::string& s);
std::string to_string(Pooling p);

nlohmann::ordered_json block_config_to_json(const HOTBlockConfig& cfg);
/// Fills `cfg` from j; keys absent from j keep their current values.
void block_config_from_json(const nlohmann::json& j, HOTBlockConfig& cfg, const std::string& where);

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace hot
