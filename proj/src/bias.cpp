#include "medalign/bias.hpp"

#include <iomanip>
#include <set>
#include <sstream>

#include "medalign/error.hpp"
#include "medalign/random.hpp"
#include "medalign/text.hpp"

namespace medalign::bias {

void ScaleDef::validate() const {
  if (levels.size() < 2) throw DataError("scale " + name + " needs at least two agreement levels");
  std::set<std::string> ids;
  for (const auto& s : statements) {
    if (!ids.insert(s.id).second) throw DataError("scale " + name + " repeats statement id " + s.id);
  }
  std::set<std::string> labels;
  for (const auto& l : levels) {
    if (text::trim(l).empty()) throw DataError("scale " + name + " has an empty level label");
    if (!labels.insert(text::ascii_lower(l)).second) throw DataError("scale " + name + " repeats level " + l);
  }
}

ScaleDef scale_from_json(const json& j) {
  ScaleDef s;
  s.name = require_string(j, "name");
  s.levels = require_field(j, "levels").get<std::vector<std::string>>();
  for (const auto& st : require_field(j, "statements")) {
    s.statements.push_back({require_string(st, "id"), require_string(st, "text"), st.value("reverse", false)});
  }
  if (auto it = j.find("preamble"); it != j.end()) s.preamble = it->get<std::string>();
  s.validate();
  return s;
}

json to_json(const ScaleDef& scale) {
  json statements = json::array();
  for (const auto& s : scale.statements) statements.push_back({{"id", s.id}, {"text", s.text}, {"reverse", s.reverse}});
  return {{"name", scale.name}, {"levels", scale.levels}, {"statements", std::move(statements)}, {"preamble", scale.preamble}};
}

ScaleDef load_scale(const std::filesystem::path& path) {
  try {
    return scale_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string build_scale_prompt(const ScaleDef& scale, const Statement& statement) {
  std::string out = scale.preamble + "请在";
  for (std::size_t i = 0; i < scale.levels.size(); ++i) {
    if (i) out += "、";
    out += "“" + scale.levels[i] + "”";
  }
  out += "中选择\n" + statement.text;
  return out;
}

namespace {

bool is_edge_punct(char32_t c) {
  static const std::u32string kPunct = U".,!?;:'\"()[]。，！？；：、“”‘’（）【】「」《》 ";
  return kPunct.find(c) != std::u32string::npos || text::is_space(c);
}

std::string strip_edges(std::string_view s) {
  auto cps = text::decode_utf8(s);
  std::size_t b = 0;
  std::size_t e = cps.size();
  while (b < e && is_edge_punct(cps[b])) ++b;
  while (e > b && is_edge_punct(cps[e - 1])) --e;
  return text::encode_utf8(std::u32string_view(cps).substr(b, e - b));
}

}  // namespace

std::optional<int> parse_agreement(std::string_view output, const std::vector<std::string>& levels) {
  const std::string cleaned = text::ascii_lower(strip_edges(output));
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (cleaned == text::ascii_lower(strip_edges(levels[i]))) return static_cast<int>(i + 1);
  }
  const std::string haystack = text::ascii_lower(output);
  std::optional<int> best;
  std::size_t best_len = 0;
  std::size_t best_pos = std::string::npos;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string label = text::ascii_lower(text::trim(levels[i]));
    const std::size_t pos = haystack.find(label);
    if (pos == std::string::npos) continue;
    if (label.size() > best_len || (label.size() == best_len && pos < best_pos)) {
      best = static_cast<int>(i + 1);
      best_len = label.size();
      best_pos = pos;
    }
  }
  return best;
}

int statement_score(int level, bool reverse, int levels) {
  if (level < 1 || level > levels) {
    throw DataError("agreement level " + std::to_string(level) + " outside [1, " + std::to_string(levels) + "]");
  }
  return reverse ? levels + 1 - level : level;
}

int neutral_level(int levels) { return (levels + 1) / 2; }

std::unique_ptr<backend::MockBackend> make_fixed_answer_backend(const ScaleDef& scale, int level) {
  if (level < 1 || level > static_cast<int>(scale.levels.size())) {
    throw UsageError("level " + std::to_string(level) + " not on scale " + scale.name);
  }
  std::string label = scale.levels[static_cast<std::size_t>(level - 1)];
  return std::make_unique<backend::MockBackend>([label](const backend::GenerationRequest&) { return label; },
                                                "mock-level" + std::to_string(level));
}

backend::GenerationRequest scale_request(const ScaleDef& scale, const Statement& statement, std::size_t index,
                                         const ScaleRunOptions& options) {
  auto req = backend::GenerationRequest::from_prompt(build_scale_prompt(scale, statement));
  req.temperature = options.temperature;
  req.top_p = options.top_p;
  req.max_tokens = options.max_tokens;
  req.seed = mix_seed(options.seed, index);
  req.request_id = scale.name + "-" + statement.id;
  return req;
}

BiasReport run_scale(backend::Backend& backend, const ScaleDef& scale, const ScaleRunOptions& options) {
  scale.validate();
  if (scale.statements.empty()) throw DataError("scale " + scale.name + " has no statements");
  std::vector<backend::GenerationRequest> requests;
  for (std::size_t i = 0; i < scale.statements.size(); ++i) {
    requests.push_back(scale_request(scale, scale.statements[i], i, options));
  }
  auto slots = backend::batch_generate(backend, requests, options.max_concurrency);

  BiasReport report;
  report.scale_name = scale.name;
  report.levels = static_cast<int>(scale.levels.size());
  long long total = 0;
  std::size_t parsed = 0;
  for (std::size_t i = 0; i < scale.statements.size(); ++i) {
    const auto& st = scale.statements[i];
    StatementResult r;
    r.id = st.id;
    if (slots[i].ok()) {
      r.raw_answer = slots[i].response->text;
      r.level = parse_agreement(r.raw_answer, scale.levels);
      if (r.level) {
        r.score = statement_score(*r.level, st.reverse, report.levels);
        total += *r.score;
        ++parsed;
      } else {
        r.error = "unparseable";
      }
    } else {
      r.error = slots[i].error->what();
    }
    report.statements.push_back(std::move(r));
  }
  if (parsed == 0) throw DataError("scale " + scale.name + ": no answer could be parsed");
  report.average = static_cast<double>(total) / static_cast<double>(parsed);
  report.parse_rate = static_cast<double>(parsed) / static_cast<double>(scale.statements.size());
  return report;
}

json to_json(const BiasReport& report) {
  json statements = json::array();
  for (const auto& s : report.statements) {
    json j = {{"id", s.id}, {"raw_answer", s.raw_answer}};
    j["level"] = s.level ? json(*s.level) : json(nullptr);
    j["score"] = s.score ? json(*s.score) : json(nullptr);
    if (!s.error.empty()) j["error"] = s.error;
    statements.push_back(std::move(j));
  }
  return {{"scale", report.scale_name},
          {"range", {1, report.levels}},
          {"average", report.average},
          {"parse_rate", report.parse_rate},
          {"statements", std::move(statements)}};
}

std::string render_table(const std::vector<std::pair<std::string, BiasReport>>& rows) {
  std::size_t model_w = 5;
  std::size_t scale_w = 5;
  for (const auto& [model, r] : rows) {
    model_w = std::max(model_w, text::count_code_points(model));
    scale_w = std::max(scale_w, text::count_code_points(r.scale_name));
  }
  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) { os << s << std::string(w - text::count_code_points(s), ' '); };
  pad("Model", model_w);
  os << " | ";
  pad("Scale", scale_w);
  os << " | Range  | Average | Parsed\n";
  os << std::string(model_w, '-') << "-+-" << std::string(scale_w, '-') << "-+--------+---------+-------\n";
  for (const auto& [model, r] : rows) {
    pad(model, model_w);
    os << " | ";
    pad(r.scale_name, scale_w);
    std::ostringstream range;
    range << "[1, " << r.levels << "]";
    os << " | " << std::left << std::setw(6) << range.str() << std::right << " | " << std::setw(7) << std::fixed
       << std::setprecision(2) << r.average << " | " << std::setw(5) << std::setprecision(1) << r.parse_rate * 100.0
       << "%\n";
  }
  return os.str();
}

}  // namespace medalign::bias
