#include "medalign/jsonl.hpp"

#include <sstream>

namespace medalign {
namespace detail {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::string describe(const std::vector<LineError>& rejects) {
  std::ostringstream os;
  for (const auto& r : rejects) os << "line " << r.line << ": " << r.message << "\n";
  return os.str();
}

}  // namespace detail

std::vector<json> read_jsonl_values(const std::filesystem::path& path) {
  return read_jsonl<json>(path, [](json j) { return j; }, true).records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& values) {
  std::string out;
  for (const auto& v : values) {
    out += v.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  write_text(path, out);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const json& require_field(const json& j, const char* field) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto it = j.find(field);
  if (it == j.end()) throw DataError(std::string("missing field \"") + field + "\"");
  return *it;
}

std::string require_string(const json& j, const char* field) {
  const json& v = require_field(j, field);
  if (!v.is_string()) throw DataError(std::string("field \"") + field + "\" is not a string");
  return v.get<std::string>();
}

}  // namespace medalign
