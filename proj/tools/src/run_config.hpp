#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace inductlab::cli {

// Bad flags, bad config values, missing files. Exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resolved configuration: the JSON file (if any) with command-line flags
// layered on top. Typed getters throw ConfigError on type mismatches.
class RunConfig {
 public:
  RunConfig() = default;
  RunConfig(std::string command, nlohmann::json values)
      : command_(std::move(command)), values_(std::move(values)) {}

  static nlohmann::json load_file(const std::filesystem::path& path);

  const std::string& command() const { return command_; }
  const nlohmann::json& values() const { return values_; }
  nlohmann::json& values() { return values_; }

  bool has(const std::string& key) const;
  std::uint64_t seed() const;  // mandatory
  std::filesystem::path out_dir() const;
  std::size_t workers() const;  // flag, then INDUCTLAB_WORKERS, then 1
  std::filesystem::path checkpoint(const std::string& key = "checkpoint") const;

  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;
  const nlohmann::json* object(const std::string& key) const;

  // Values that determine the artifacts: everything except workers and
  // out_dir, serialized with sorted keys.
  std::string echo() const;

 private:
  const nlohmann::json* find(const std::string& key) const;

  std::string command_;
  nlohmann::json values_ = nlohmann::json::object();
};

}  // namespace inductlab::cli
