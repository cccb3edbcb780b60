#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medalign/jsonl.hpp"

namespace medalign {

struct FileRecord {
  std::string role;
  std::string path;
  std::string sha256;
};

// Per-stage record written next to the outputs. No timestamps, so re-runs of
// the same stage produce byte-identical manifests.
struct StageManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  json params = json::object();

  // Hashes the file now. A directory input hashes each regular file inside
  // it in path order.
  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& role, const std::filesystem::path& path);

  json to_json() const;
  static StageManifest from_json(const json& j);

  // Writes <dir>/<command>.manifest.json and returns the path.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

std::vector<FileRecord> hash_path(const std::string& role, const std::filesystem::path& path);

}  // namespace medalign
