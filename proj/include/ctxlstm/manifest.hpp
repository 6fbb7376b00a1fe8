#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ctxlstm {

std::uint64_t fnv1a64(std::string_view bytes);
/// Hex FNV-1a digest of a file's contents.
std::string file_digest(const std::filesystem::path& path);

/// Record of one CLI run, written next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_;
};

}  // namespace ctxlstm
