#include "medalign/manifest.hpp"

#include <algorithm>

#include "medalign/digest.hpp"
#include "medalign/error.hpp"

namespace medalign {

namespace fs = std::filesystem;

std::vector<FileRecord> hash_path(const std::string& role, const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<FileRecord> out;
    for (const auto& f : files) out.push_back({role, f.generic_string(), sha256_file(f)});
    return out;
  }
  if (!fs::exists(path)) throw DataError("missing file: " + path.string());
  return {{role, path.generic_string(), sha256_file(path)}};
}

void StageManifest::add_input(const std::string& role, const fs::path& path) {
  auto recs = hash_path(role, path);
  inputs.insert(inputs.end(), recs.begin(), recs.end());
}

void StageManifest::add_output(const std::string& role, const fs::path& path) {
  auto recs = hash_path(role, path);
  outputs.insert(outputs.end(), recs.begin(), recs.end());
}

namespace {

json files_json(const std::vector<FileRecord>& files) {
  json a = json::array();
  for (const auto& f : files) a.push_back({{"role", f.role}, {"path", f.path}, {"sha256", f.sha256}});
  return a;
}

std::vector<FileRecord> files_from(const json& a) {
  std::vector<FileRecord> out;
  for (const auto& f : a) out.push_back({require_string(f, "role"), require_string(f, "path"), require_string(f, "sha256")});
  return out;
}

}  // namespace

json StageManifest::to_json() const {
  return {{"command", command},
          {"seed", seed},
          {"inputs", files_json(inputs)},
          {"outputs", files_json(outputs)},
          {"params", params}};
}

StageManifest StageManifest::from_json(const json& j) {
  StageManifest m;
  m.command = require_string(j, "command");
  m.seed = require_field(j, "seed").get<std::uint64_t>();
  m.inputs = files_from(require_field(j, "inputs"));
  m.outputs = files_from(require_field(j, "outputs"));
  m.params = j.value("params", json::object());
  return m;
}

fs::path StageManifest::write(const fs::path& dir) const {
  std::string name = command;
  std::replace(name.begin(), name.end(), ' ', '-');
  fs::path out = dir / (name + ".manifest.json");
  write_text(out, to_json().dump(2) + "\n");
  return out;
}

}  // namespace medalign
