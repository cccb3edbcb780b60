#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medalign/error.hpp"

namespace medalign {

using json = nlohmann::json;

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

template <class T>
struct Ingested {
  std::vector<T> records;
  std::vector<LineError> rejects;
};

namespace detail {
std::ifstream open_for_read(const std::filesystem::path& path);
std::string describe(const std::vector<LineError>& rejects);
}  // namespace detail

// Reads one JSON object per line. Blank lines are ignored. A line that fails
// to parse, or that `parse` rejects by throwing, is collected into `rejects`
// with its line number; with `strict` the first reject throws DataError.
template <class T, class Parse>
Ingested<T> read_jsonl(const std::filesystem::path& path, Parse&& parse, bool strict = false) {
  auto in = detail::open_for_read(path);
  Ingested<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.records.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      out.rejects.push_back({line_no, e.what()});
    } catch (const DataError& e) {
      out.rejects.push_back({line_no, e.what()});
    }
    if (strict && !out.rejects.empty()) {
      throw DataError(path.string() + ": " + detail::describe(out.rejects));
    }
  }
  return out;
}

std::vector<json> read_jsonl_values(const std::filesystem::path& path);

// Writes compact, key-sorted JSON, one value per line, UTF-8 kept verbatim.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& values);
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Field accessors that raise DataError with the field name.
std::string require_string(const json& j, const char* field);
const json& require_field(const json& j, const char* field);

}  // namespace medalign
