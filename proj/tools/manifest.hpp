#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace eirm::cli {

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Provenance record written as manifest.json next to a command's outputs.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_config(const std::string& key, nlohmann::json value) { config_[key] = std::move(value); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& name) { outputs_.push_back(name); }
  void add_warning(const std::string& text) { warnings_.push_back(text); }

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace eirm::cli
