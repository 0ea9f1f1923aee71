#pragma once

// Run manifests: everything needed to repeat a CLI run exactly.

#include <filesystem>
#include <string>

#include <json.hpp>

namespace simnet::cli {

std::string sha256_hex(const std::filesystem::path& path);

class Manifest {
 public:
  explicit Manifest(std::string command);

  nlohmann::ordered_json& config() { return doc_["config"]; }
  void seed(const std::string& name, std::uint64_t value) { doc_["seeds"][name] = value; }
  /// Records path and content hash; call after the file is complete.
  void input(const std::string& role, const std::filesystem::path& path);
  void output(const std::string& role, const std::filesystem::path& path);

  std::string dump() const { return doc_.dump(2) + "\n"; }
  void write(const std::filesystem::path& path) const;

 private:
  nlohmann::ordered_json doc_;
};

/// "<path>.manifest.json"
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

}  // namespace simnet::cli
