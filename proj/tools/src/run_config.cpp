#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

namespace inductlab::cli {

using nlohmann::json;

json RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  return j;
}

const json* RunConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->is_null()) return nullptr;
  return &*it;
}

bool RunConfig::has(const std::string& key) const { return find(key) != nullptr; }

const json* RunConfig::object(const std::string& key) const {
  const json* v = find(key);
  if (v && !v->is_object()) throw ConfigError("config key '" + key + "' must be an object");
  return v;
}

std::uint64_t RunConfig::seed() const {
  const json* v = find("seed");
  if (!v) throw ConfigError("a seed is required (--seed or \"seed\" in the config file)");
  if (!v->is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
  return v->get<std::uint64_t>();
}

std::filesystem::path RunConfig::out_dir() const { return get_string("out_dir", "."); }

std::size_t RunConfig::workers() const {
  if (has("workers")) {
    const auto w = get_size("workers", 1);
    if (w == 0) throw ConfigError("workers must be at least 1");
    return w;
  }
  if (const char* env = std::getenv("INDUCTLAB_WORKERS"); env && *env) {
    char* end = nullptr;
    const unsigned long long w = std::strtoull(env, &end, 10);
    if (*end != '\0' || w == 0) throw ConfigError("INDUCTLAB_WORKERS must be a positive integer");
    return static_cast<std::size_t>(w);
  }
  return 1;
}

std::filesystem::path RunConfig::checkpoint(const std::string& key) const {
  const std::string p = get_string(key, "");
  if (p.empty()) throw ConfigError("'" + key + "' is required for " + command_);
  if (!std::filesystem::exists(p)) throw ConfigError(key + " '" + p + "' does not exist");
  return p;
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_number_unsigned()) throw ConfigError("'" + key + "' must be a non-negative integer");
  return v->get<std::size_t>();
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError("'" + key + "' must be a number");
  return v->get<double>();
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError("'" + key + "' must be true or false");
  return v->get<bool>();
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError("'" + key + "' must be a string");
  return v->get<std::string>();
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key,
                                              const std::vector<std::size_t>& fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError("'" + key + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : *v) {
    if (!e.is_number_unsigned()) throw ConfigError("'" + key + "' must hold non-negative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key,
                                                const std::vector<std::string>& fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError("'" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *v) {
    if (!e.is_string()) throw ConfigError("'" + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string RunConfig::echo() const {
  json copy = values_;
  copy.erase("workers");
  copy.erase("out_dir");
  return copy.dump();  // nlohmann objects are key-sorted
}

}  // namespace inductlab::cli
