#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "medalign/jsonl.hpp"
#include "medalign/text.hpp"
#include "medalign/tokenizer.hpp"

namespace medalign::corpus {

struct Document {
  std::string id;
  std::string text;
  std::string source;
};

struct QAPair {
  std::string id;
  std::string question;
  std::string answer;
  std::string source;
};

enum class Speaker { patient, doctor };

struct Turn {
  Speaker speaker = Speaker::patient;
  std::string text;
};

struct DialogueCase {
  std::string id;
  std::vector<Turn> turns;
};

struct PreferenceRaw {
  std::string id;
  std::string prompt;
  std::string accepted;
  std::string rejected;
};

enum class Origin { qa, dialogue, safety };

struct PromptResponse {
  std::string prompt;
  std::string response;
  Origin origin = Origin::qa;

  bool operator==(const PromptResponse&) const = default;
};

enum class Schema { document, qa, dialogue, preference, pair };

// Throws UsageError on unknown names.
Schema parse_schema(std::string_view name);
std::string_view to_string(Schema s);
std::string_view to_string(Speaker s);
std::string_view to_string(Origin o);
Speaker parse_speaker(std::string_view name);
Origin parse_origin(std::string_view name);

// JSON mapping. Parsers throw DataError when a record violates its invariants.
Document document_from_json(const json& j);
QAPair qa_from_json(const json& j);
DialogueCase dialogue_from_json(const json& j);
PreferenceRaw preference_from_json(const json& j);
PromptResponse pair_from_json(const json& j);

json to_json(const Document& d);
json to_json(const QAPair& q);
json to_json(const DialogueCase& d);
json to_json(const PreferenceRaw& p);
json to_json(const PromptResponse& p);

using Records = std::variant<std::vector<Document>, std::vector<QAPair>, std::vector<DialogueCase>,
                             std::vector<PreferenceRaw>, std::vector<PromptResponse>>;

struct IngestResult {
  Schema schema = Schema::document;
  Records records;
  std::vector<LineError> rejects;

  std::size_t size() const;
};

// Malformed lines are collected; with `strict` the first one throws DataError.
IngestResult ingest(const std::filesystem::path& path, Schema schema, bool strict = false);

template <class T>
Ingested<T> ingest_as(const std::filesystem::path& path, bool strict = false);

// Content key used for duplicate detection; ids, source tags and origin tags
// are not part of it.
std::string dedup_key(const Document& d);
std::string dedup_key(const QAPair& q);
std::string dedup_key(const DialogueCase& d);
std::string dedup_key(const PreferenceRaw& p);
std::string dedup_key(const PromptResponse& p);

// Drops records whose normalized content equals an earlier record's; order
// of the survivors is kept.
template <class T>
std::vector<T> deduplicate(std::vector<T> records) {
  std::unordered_set<std::string> seen;
  std::vector<T> out;
  out.reserve(records.size());
  for (auto& r : records) {
    if (seen.insert(dedup_key(r)).second) out.push_back(std::move(r));
  }
  return out;
}

inline constexpr std::string_view kPhonePlaceholder = "<PHONE>";
inline constexpr std::string_view kIdPlaceholder = "<ID>";
inline constexpr std::string_view kEmailPlaceholder = "<EMAIL>";

// Replaces mainland mobile numbers (11 digits, 1[3-9]...), landlines
// (0xx[x]-xxxxxxx[x]), 18-character resident ID numbers and e-mail addresses.
// Digit patterns only match when not embedded in a longer digit run.
std::string scrub_pii(std::string_view text);

// Applies scrub_pii to every text field.
PromptResponse scrub(PromptResponse p);
QAPair scrub(QAPair q);
DialogueCase scrub(DialogueCase d);
Document scrub(Document d);

inline constexpr std::string_view kPatientPrefix = "患者:";
inline constexpr std::string_view kDoctorPrefix = "医生:";

struct SkippedRecord {
  std::string id;
  std::string reason;
};

struct SftBuild {
  std::vector<PromptResponse> pairs;
  std::vector<SkippedRecord> skipped;
};

// Renders turns as "患者:text" / "医生:text" lines joined by '\n'.
std::string render_turns(const std::vector<Turn>& turns);

// QA pairs map directly; a dialogue becomes (history rendered line by line,
// final doctor turn). Dialogues that do not end on a doctor turn after a
// non-empty history are skipped and reported.
SftBuild build_sft_pairs(const std::vector<QAPair>& qa, const std::vector<DialogueCase>& dialogues);

std::vector<PromptResponse> merge_with_safety(std::vector<PromptResponse> sft,
                                              const std::vector<PromptResponse>& safety);

struct DatasetStats {
  std::size_t instances = 0;
  std::size_t tokens = 0;
  std::size_t bytes = 0;

  bool operator==(const DatasetStats&) const = default;
};

// Text fields per record type (ids and tags excluded).
std::vector<std::string_view> text_fields(const Document& d);
std::vector<std::string_view> text_fields(const QAPair& q);
std::vector<std::string_view> text_fields(const DialogueCase& d);
std::vector<std::string_view> text_fields(const PreferenceRaw& p);
std::vector<std::string_view> text_fields(const PromptResponse& p);

template <class T>
DatasetStats dataset_stats(const std::vector<T>& records, const Tokenizer& tok) {
  DatasetStats s;
  s.instances = records.size();
  for (const auto& r : records) {
    for (auto field : text_fields(r)) {
      s.tokens += tok.count(field);
      s.bytes += field.size();
    }
  }
  return s;
}

DatasetStats dataset_stats(const IngestResult& ingested, const Tokenizer& tok);

}  // namespace medalign::corpus
