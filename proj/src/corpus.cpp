#include "medalign/corpus.hpp"

#include <regex>

#include "medalign/error.hpp"

namespace medalign::corpus {

Schema parse_schema(std::string_view name) {
  if (name == "document") return Schema::document;
  if (name == "qa") return Schema::qa;
  if (name == "dialogue") return Schema::dialogue;
  if (name == "preference") return Schema::preference;
  if (name == "pair") return Schema::pair;
  throw UsageError("unknown schema \"" + std::string(name) +
                   "\" (expected document|qa|dialogue|preference|pair)");
}

std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::document: return "document";
    case Schema::qa: return "qa";
    case Schema::dialogue: return "dialogue";
    case Schema::preference: return "preference";
    case Schema::pair: return "pair";
  }
  return "?";
}

std::string_view to_string(Speaker s) { return s == Speaker::patient ? "patient" : "doctor"; }

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::qa: return "qa";
    case Origin::dialogue: return "dialogue";
    case Origin::safety: return "safety";
  }
  return "?";
}

Speaker parse_speaker(std::string_view name) {
  if (name == "patient" || name == "患者") return Speaker::patient;
  if (name == "doctor" || name == "医生") return Speaker::doctor;
  throw DataError("unknown speaker \"" + std::string(name) + "\"");
}

Origin parse_origin(std::string_view name) {
  if (name == "qa") return Origin::qa;
  if (name == "dialogue") return Origin::dialogue;
  if (name == "safety") return Origin::safety;
  throw DataError("unknown origin \"" + std::string(name) + "\"");
}

namespace {

std::string non_empty(const json& j, const char* field) {
  std::string v = require_string(j, field);
  if (text::collapse_whitespace(v).empty()) {
    throw DataError(std::string("field \"") + field + "\" is empty");
  }
  return v;
}

std::string optional_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(std::string("field \"") + field + "\" is not a string");
  return it->get<std::string>();
}

}  // namespace

Document document_from_json(const json& j) {
  return {require_string(j, "id"), non_empty(j, "text"), optional_string(j, "source")};
}

QAPair qa_from_json(const json& j) {
  return {require_string(j, "id"), non_empty(j, "question"), non_empty(j, "answer"),
          optional_string(j, "source")};
}

DialogueCase dialogue_from_json(const json& j) {
  DialogueCase d;
  d.id = require_string(j, "id");
  const json& turns = require_field(j, "turns");
  if (!turns.is_array()) throw DataError("field \"turns\" is not an array");
  for (const auto& t : turns) {
    d.turns.push_back({parse_speaker(require_string(t, "speaker")), non_empty(t, "text")});
  }
  return d;
}

PreferenceRaw preference_from_json(const json& j) {
  PreferenceRaw p{require_string(j, "id"), non_empty(j, "prompt"), non_empty(j, "accepted"),
                  non_empty(j, "rejected")};
  if (p.accepted == p.rejected) throw DataError("accepted and rejected answers are identical");
  return p;
}

PromptResponse pair_from_json(const json& j) {
  PromptResponse p{non_empty(j, "prompt"), non_empty(j, "response"), Origin::qa};
  auto origin = optional_string(j, "origin");
  if (!origin.empty()) p.origin = parse_origin(origin);
  return p;
}

json to_json(const Document& d) { return {{"id", d.id}, {"text", d.text}, {"source", d.source}}; }

json to_json(const QAPair& q) {
  return {{"id", q.id}, {"question", q.question}, {"answer", q.answer}, {"source", q.source}};
}

json to_json(const DialogueCase& d) {
  json turns = json::array();
  for (const auto& t : d.turns) turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
  return {{"id", d.id}, {"turns", std::move(turns)}};
}

json to_json(const PreferenceRaw& p) {
  return {{"id", p.id}, {"prompt", p.prompt}, {"accepted", p.accepted}, {"rejected", p.rejected}};
}

json to_json(const PromptResponse& p) {
  return {{"prompt", p.prompt}, {"response", p.response}, {"origin", to_string(p.origin)}};
}

template <>
Ingested<Document> ingest_as<Document>(const std::filesystem::path& path, bool strict) {
  return read_jsonl<Document>(path, document_from_json, strict);
}
template <>
Ingested<QAPair> ingest_as<QAPair>(const std::filesystem::path& path, bool strict) {
  return read_jsonl<QAPair>(path, qa_from_json, strict);
}
template <>
Ingested<DialogueCase> ingest_as<DialogueCase>(const std::filesystem::path& path, bool strict) {
  return read_jsonl<DialogueCase>(path, dialogue_from_json, strict);
}
template <>
Ingested<PreferenceRaw> ingest_as<PreferenceRaw>(const std::filesystem::path& path, bool strict) {
  return read_jsonl<PreferenceRaw>(path, preference_from_json, strict);
}
template <>
Ingested<PromptResponse> ingest_as<PromptResponse>(const std::filesystem::path& path, bool strict) {
  return read_jsonl<PromptResponse>(path, pair_from_json, strict);
}

std::size_t IngestResult::size() const {
  return std::visit([](const auto& v) { return v.size(); }, records);
}

namespace {
template <class T>
IngestResult wrap(Schema schema, Ingested<T> in) {
  return {schema, std::move(in.records), std::move(in.rejects)};
}
}  // namespace

IngestResult ingest(const std::filesystem::path& path, Schema schema, bool strict) {
  switch (schema) {
    case Schema::document: return wrap(schema, ingest_as<Document>(path, strict));
    case Schema::qa: return wrap(schema, ingest_as<QAPair>(path, strict));
    case Schema::dialogue: return wrap(schema, ingest_as<DialogueCase>(path, strict));
    case Schema::preference: return wrap(schema, ingest_as<PreferenceRaw>(path, strict));
    case Schema::pair: return wrap(schema, ingest_as<PromptResponse>(path, strict));
  }
  throw UsageError("unknown schema");
}

namespace {
constexpr char kKeySep = '\x1f';

std::string key_of(std::initializer_list<std::string_view> fields) {
  std::string key;
  for (auto f : fields) {
    key += text::normalize(f);
    key += kKeySep;
  }
  return key;
}
}  // namespace

std::string dedup_key(const Document& d) { return key_of({d.text}); }
std::string dedup_key(const QAPair& q) { return key_of({q.question, q.answer}); }
std::string dedup_key(const PreferenceRaw& p) { return key_of({p.prompt, p.accepted, p.rejected}); }
std::string dedup_key(const PromptResponse& p) { return key_of({p.prompt, p.response}); }

std::string dedup_key(const DialogueCase& d) {
  std::string key;
  for (const auto& t : d.turns) {
    key += to_string(t.speaker);
    key += ':';
    key += text::normalize(t.text);
    key += kKeySep;
  }
  return key;
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_id_number(std::string_view run) {
  if (run.size() != 18) return false;
  for (std::size_t i = 0; i < 17; ++i) {
    if (!is_digit(run[i])) return false;
  }
  return is_digit(run[17]) || run[17] == 'X' || run[17] == 'x';
}

bool is_mobile(std::string_view run) {
  return run.size() == 11 && run[0] == '1' && run[1] >= '3' && run[1] <= '9';
}

// Replaces maximal digit runs (with an optional trailing X for IDs).
std::string scrub_digit_runs(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit(text[i])) {
      out.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j])) ++j;
    std::size_t end = j;
    if (end - i == 17 && end < text.size() && (text[end] == 'X' || text[end] == 'x')) ++end;
    std::string_view run = text.substr(i, end - i);
    bool trailing_digit = end < text.size() && is_digit(text[end]);
    if (!trailing_digit && is_id_number(run)) {
      out.append(kIdPlaceholder);
    } else if (is_mobile(run)) {
      out.append(kPhonePlaceholder);
    } else {
      out.append(run);
    }
    i = end;
  }
  return out;
}

}  // namespace

std::string scrub_pii(std::string_view text) {
  static const std::regex kEmail(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,})");
  // Landline: area code 0xx or 0xxx, dash, 7-8 digit subscriber number, not
  // touching other digits.
  static const std::regex kLandline(R"((^|[^0-9])0[0-9]{2,3}-[0-9]{7,8}(?![0-9]))");

  std::string s = std::regex_replace(std::string(text), kEmail, std::string(kEmailPlaceholder));
  s = std::regex_replace(s, kLandline, "$1" + std::string(kPhonePlaceholder));
  return scrub_digit_runs(s);
}

PromptResponse scrub(PromptResponse p) {
  p.prompt = scrub_pii(p.prompt);
  p.response = scrub_pii(p.response);
  return p;
}

QAPair scrub(QAPair q) {
  q.question = scrub_pii(q.question);
  q.answer = scrub_pii(q.answer);
  return q;
}

DialogueCase scrub(DialogueCase d) {
  for (auto& t : d.turns) t.text = scrub_pii(t.text);
  return d;
}

Document scrub(Document d) {
  d.text = scrub_pii(d.text);
  return d;
}

std::string render_turns(const std::vector<Turn>& turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) out += '\n';
    out += turns[i].speaker == Speaker::patient ? kPatientPrefix : kDoctorPrefix;
    out += turns[i].text;
  }
  return out;
}

SftBuild build_sft_pairs(const std::vector<QAPair>& qa, const std::vector<DialogueCase>& dialogues) {
  SftBuild out;
  out.pairs.reserve(qa.size() + dialogues.size());
  for (const auto& q : qa) out.pairs.push_back({q.question, q.answer, Origin::qa});
  for (const auto& d : dialogues) {
    if (d.turns.size() < 2) {
      out.skipped.push_back({d.id, "fewer than two turns"});
      continue;
    }
    if (d.turns.back().speaker != Speaker::doctor) {
      out.skipped.push_back({d.id, "final turn is not a doctor turn"});
      continue;
    }
    std::vector<Turn> history(d.turns.begin(), d.turns.end() - 1);
    out.pairs.push_back({render_turns(history), d.turns.back().text, Origin::dialogue});
  }
  return out;
}

std::vector<PromptResponse> merge_with_safety(std::vector<PromptResponse> sft,
                                              const std::vector<PromptResponse>& safety) {
  sft.insert(sft.end(), safety.begin(), safety.end());
  return deduplicate(std::move(sft));
}

std::vector<std::string_view> text_fields(const Document& d) { return {d.text}; }
std::vector<std::string_view> text_fields(const QAPair& q) { return {q.question, q.answer}; }
std::vector<std::string_view> text_fields(const PreferenceRaw& p) {
  return {p.prompt, p.accepted, p.rejected};
}
std::vector<std::string_view> text_fields(const PromptResponse& p) { return {p.prompt, p.response}; }
std::vector<std::string_view> text_fields(const DialogueCase& d) {
  std::vector<std::string_view> out;
  for (const auto& t : d.turns) out.push_back(t.text);
  return out;
}

DatasetStats dataset_stats(const IngestResult& ingested, const Tokenizer& tok) {
  return std::visit([&](const auto& v) { return dataset_stats(v, tok); }, ingested.records);
}

}  // namespace medalign::corpus
