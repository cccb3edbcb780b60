#include "medalign/evalkit.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "medalign/error.hpp"
#include "medalign/random.hpp"
#include "medalign/text.hpp"

namespace medalign::evalkit {

TaskKind parse_task(std::string_view name) {
  if (name == "ner") return TaskKind::ner;
  if (name == "mc_qa" || name == "mc") return TaskKind::mc_qa;
  if (name == "open_qa" || name == "qa") return TaskKind::open_qa;
  if (name == "dialogue") return TaskKind::dialogue;
  throw UsageError("unknown task \"" + std::string(name) + "\" (expected ner|mc_qa|open_qa|dialogue)");
}

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::ner: return "ner";
    case TaskKind::mc_qa: return "mc_qa";
    case TaskKind::open_qa: return "open_qa";
    case TaskKind::dialogue: return "dialogue";
  }
  return "?";
}

TaskKind task_of(const EvalInstance& instance) {
  return static_cast<TaskKind>(instance.index());
}

void validate(const EvalInstance& instance) {
  if (const auto* mc = std::get_if<McInstance>(&instance)) {
    if (mc->options.empty()) throw DataError("multiple-choice question has no options");
    std::set<char> labels;
    for (const auto& o : mc->options) {
      if (o.label < 'A' || o.label > 'Z') throw DataError(std::string("option label must be A-Z, got ") + o.label);
      if (!labels.insert(o.label).second) throw DataError(std::string("duplicate option label ") + o.label);
    }
    if (!labels.count(mc->answer)) throw DataError(std::string("answer ") + mc->answer + " is not an option");
  }
}

namespace {

std::vector<std::string> string_list(const json& j) {
  if (!j.is_array()) throw DataError("expected an array of strings");
  return j.get<std::vector<std::string>>();
}

}  // namespace

EvalInstance instance_from_json(TaskKind task, const json& j, const std::vector<std::string>& default_entity_types) {
  EvalInstance out;
  switch (task) {
    case TaskKind::ner: {
      NerInstance n;
      n.text = require_string(j, "text");
      for (const auto& e : require_field(j, "entities")) {
        n.gold.insert({require_string(e, "type"), require_string(e, "mention")});
      }
      if (auto it = j.find("entity_types"); it != j.end()) {
        n.entity_types = string_list(*it);
      } else if (!default_entity_types.empty()) {
        n.entity_types = default_entity_types;
      } else {
        std::set<std::string> types;
        for (const auto& e : n.gold) types.insert(e.type);
        n.entity_types.assign(types.begin(), types.end());
      }
      out = std::move(n);
      break;
    }
    case TaskKind::mc_qa: {
      McInstance m;
      m.question = require_string(j, "question");
      const json& opts = require_field(j, "options");
      if (!opts.is_object()) throw DataError("\"options\" must be an object keyed by label");
      for (const auto& [label, value] : opts.items()) {
        if (label.size() != 1) throw DataError("option label must be a single letter: " + label);
        m.options.push_back({label[0], value.get<std::string>()});
      }
      std::sort(m.options.begin(), m.options.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
      auto answer = require_string(j, "answer");
      if (answer.size() != 1) throw DataError("answer must be a single letter: " + answer);
      m.answer = answer[0];
      out = std::move(m);
      break;
    }
    case TaskKind::open_qa:
      out = QaInstance{require_string(j, "question"), require_string(j, "answer")};
      break;
    case TaskKind::dialogue: {
      DialogueInstance d;
      for (const auto& t : require_field(j, "turns")) {
        d.turns.push_back({corpus::parse_speaker(require_string(t, "speaker")), require_string(t, "text")});
      }
      if (d.turns.empty()) throw DataError("dialogue has no history turns");
      d.gold_response = require_string(j, "gold_response");
      out = std::move(d);
      break;
    }
  }
  validate(out);
  return out;
}

std::vector<EvalInstance> load_dataset(const std::filesystem::path& path, TaskKind task,
                                       const std::vector<std::string>& default_entity_types) {
  auto in = read_jsonl<EvalInstance>(
      path, [&](const json& j) { return instance_from_json(task, j, default_entity_types); }, true);
  return std::move(in.records);
}

void TaskSpec::validate() const {
  if (shots < 0) throw UsageError("shots must be >= 0");
  if (static_cast<std::size_t>(shots) > exemplars.size()) {
    throw UsageError("shots (" + std::to_string(shots) + ") exceeds the " + std::to_string(exemplars.size()) +
                     " available exemplars");
  }
  for (const auto& e : exemplars) {
    if (task_of(e) != task) throw UsageError("exemplar task does not match the task spec");
  }
}

std::string default_description(TaskKind task) {
  switch (task) {
    case TaskKind::ner:
      return "请从文本中抽取医学实体，只使用给定的实体类型。每行输出一个实体，格式为“类型: 实体”。";
    case TaskKind::mc_qa:
      return "以下是医学单项选择题，请给出正确选项的字母。";
    case TaskKind::open_qa:
      return "假设你是一名医生，请回答患者的问题。";
    case TaskKind::dialogue:
      return "假设你是一名医生，请根据对话历史回复患者。";
  }
  return {};
}

namespace {

std::string ner_gold_lines(const metrics::EntitySet& gold) {
  std::vector<std::string> lines;
  for (const auto& e : gold) lines.push_back(e.type + ": " + e.mention);
  return text::join(lines, "\n");
}

// Block for one instance; `with_gold` appends the answer.
std::string render_block(const EvalInstance& instance, bool with_gold) {
  std::string out;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NerInstance>) {
          out = "文本：" + x.text + "\n实体类型：" + text::join(x.entity_types, "、") + "\n答案：";
          if (with_gold) out += "\n" + ner_gold_lines(x.gold);
        } else if constexpr (std::is_same_v<T, McInstance>) {
          out = "问题：" + x.question;
          for (const auto& o : x.options) out += std::string("\n") + o.label + ". " + o.text;
          out += "\n答案：";
          if (with_gold) out += x.answer;
        } else if constexpr (std::is_same_v<T, QaInstance>) {
          out = "问题：" + x.question + "\n答案：";
          if (with_gold) out += x.answer;
        } else {
          out = corpus::render_turns(x.turns) + "\n" + std::string(corpus::kDoctorPrefix);
          if (with_gold) out += x.gold_response;
        }
      },
      instance);
  return out;
}

}  // namespace

std::string render_gold(const EvalInstance& instance) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NerInstance>) return ner_gold_lines(x.gold);
        else if constexpr (std::is_same_v<T, McInstance>) return std::string(1, x.answer);
        else if constexpr (std::is_same_v<T, QaInstance>) return x.answer;
        else return x.gold_response;
      },
      instance);
}

std::string PromptParts::render() const {
  std::string out = description;
  for (const auto& b : exemplar_blocks) {
    out += kBlockSeparator;
    out += b;
  }
  out += kBlockSeparator;
  out += instance_block;
  return out;
}

PromptParts build_prompt_parts(const TaskSpec& spec, const EvalInstance& instance, std::uint64_t seed) {
  spec.validate();
  PromptParts parts;
  parts.description = spec.description.empty() ? default_description(spec.task) : spec.description;
  if (spec.shots > 0) {
    auto order = shuffled_indices(spec.exemplars.size(), seed);
    for (int i = 0; i < spec.shots; ++i) {
      parts.exemplar_blocks.push_back(render_block(spec.exemplars[order[static_cast<std::size_t>(i)]], true));
    }
  }
  parts.instance_block = render_block(instance, false);
  return parts;
}

std::string build_prompt(const TaskSpec& spec, const EvalInstance& instance, std::uint64_t seed) {
  return build_prompt_parts(spec, instance, seed).render();
}

namespace {

// Strips "-", "*", "•" and "1." style markers at the start of a line.
std::string strip_list_marker(std::string line) {
  static const std::vector<std::string> kMarkers = {"-", "*", "•", "·"};
  for (const auto& m : kMarkers) {
    if (line.rfind(m, 0) == 0) return text::trim(line.substr(m.size()));
  }
  std::size_t i = 0;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) return text::trim(line.substr(i + 1));
  return line;
}

}  // namespace

ParsedEntities parse_entities(std::string_view output, const std::vector<std::string>& entity_types) {
  static const std::string kFullWidthColon = "：";
  const std::set<std::string> known(entity_types.begin(), entity_types.end());
  ParsedEntities out;
  for (const auto& raw : text::split(output, '\n')) {
    std::string line = text::trim(raw);
    if (line.empty()) continue;
    line = strip_list_marker(std::move(line));
    std::size_t pos = line.find(':');
    std::size_t width = 1;
    const std::size_t fw = line.find(kFullWidthColon);
    if (fw != std::string::npos && (pos == std::string::npos || fw < pos)) {
      pos = fw;
      width = kFullWidthColon.size();
    }
    if (pos == std::string::npos) {
      ++out.dropped_lines;
      continue;
    }
    std::string type = text::trim(line.substr(0, pos));
    std::string mention = text::trim(line.substr(pos + width));
    if (type.empty() || mention.empty() || !known.count(type)) {
      ++out.dropped_lines;
      continue;
    }
    out.entities.insert({std::move(type), std::move(mention)});
  }
  return out;
}

namespace {
bool is_ascii_alnum(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}
}  // namespace

std::optional<char> extract_choice(std::string_view output, const std::vector<McOption>& options) {
  std::set<char> labels;
  for (const auto& o : options) labels.insert(o.label);
  for (std::size_t i = 0; i < output.size(); ++i) {
    const char c = output[i];
    if (!labels.count(c)) continue;
    const bool left_ok = i == 0 || !is_ascii_alnum(output[i - 1]);
    const bool right_ok = i + 1 == output.size() || !is_ascii_alnum(output[i + 1]);
    if (left_ok && right_ok) return c;
  }
  std::optional<char> best;
  std::size_t best_pos = std::string_view::npos;
  std::size_t best_len = 0;
  for (const auto& o : options) {
    if (o.text.empty()) continue;
    const std::size_t pos = output.find(o.text);
    if (pos == std::string_view::npos) continue;
    if (pos < best_pos || (pos == best_pos && o.text.size() > best_len)) {
      best = o.label;
      best_pos = pos;
      best_len = o.text.size();
    }
  }
  return best;
}

std::vector<std::string> metric_names(TaskKind task) {
  switch (task) {
    case TaskKind::ner: return {"F1"};
    case TaskKind::mc_qa: return {"Acc"};
    case TaskKind::open_qa:
    case TaskKind::dialogue: return {"B-1", "B-2", "R-1", "R-2", "R-L"};
  }
  return {};
}

std::vector<double> score_outputs(TaskKind task, const std::vector<EvalInstance>& instances,
                                  const std::vector<std::string>& outputs) {
  if (instances.size() != outputs.size()) throw DataError("score_outputs: output count differs from instance count");
  if (instances.empty()) throw DataError("score_outputs: no instances");
  switch (task) {
    case TaskKind::ner: {
      std::vector<metrics::EntitySet> preds;
      std::vector<metrics::EntitySet> golds;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& n = std::get<NerInstance>(instances[i]);
        preds.push_back(parse_entities(outputs[i], n.entity_types).entities);
        golds.push_back(n.gold);
      }
      return {metrics::ner_f1(preds, golds).f1};
    }
    case TaskKind::mc_qa: {
      std::vector<std::optional<char>> preds;
      std::vector<char> golds;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& m = std::get<McInstance>(instances[i]);
        preds.push_back(extract_choice(outputs[i], m.options));
        golds.push_back(m.answer);
      }
      return {metrics::accuracy(preds, golds)};
    }
    case TaskKind::open_qa:
    case TaskKind::dialogue: {
      std::vector<double> sums(5, 0.0);
      for (std::size_t i = 0; i < instances.size(); ++i) {
        const std::string gold = render_gold(instances[i]);
        const auto& out = outputs[i];
        sums[0] += metrics::bleu_n(out, gold, 1);
        sums[1] += metrics::bleu_n(out, gold, 2);
        sums[2] += metrics::rouge(out, gold, metrics::RougeVariant::r1);
        sums[3] += metrics::rouge(out, gold, metrics::RougeVariant::r2);
        sums[4] += metrics::rouge(out, gold, metrics::RougeVariant::rl);
      }
      for (double& s : sums) s /= static_cast<double>(instances.size());
      return sums;
    }
  }
  return {};
}

backend::GenerationRequest eval_request(const TaskSpec& spec, const EvalInstance& instance, std::size_t index,
                                        int run, const EvalOptions& options) {
  const std::uint64_t run_seed = options.base_seed + static_cast<std::uint64_t>(run);
  auto req = backend::GenerationRequest::from_prompt(build_prompt(spec, instance, run_seed));
  req.temperature = options.temperature;
  req.top_p = options.top_p;
  req.max_tokens = options.max_tokens;
  req.seed = mix_seed(run_seed, index);
  req.request_id = "run" + std::to_string(run) + "-i" + std::to_string(index);
  return req;
}

MetricReport make_report(TaskKind task, std::vector<std::vector<double>> per_run) {
  MetricReport r;
  r.task = task;
  r.metric_names = metric_names(task);
  r.per_run = std::move(per_run);
  r.mean.assign(r.metric_names.size(), 0.0);
  if (r.per_run.empty()) return r;
  for (std::size_t m = 0; m < r.mean.size(); ++m) {
    double s = 0.0;
    for (const auto& run : r.per_run) s += run.at(m);
    r.mean[m] = s / static_cast<double>(r.per_run.size());
  }
  return r;
}

MetricReport run_eval(backend::Backend& backend, const TaskSpec& spec, const std::vector<EvalInstance>& dataset,
                      const EvalOptions& options) {
  if (dataset.empty()) throw DataError("evaluation dataset is empty");
  if (options.runs < 1) throw UsageError("runs must be >= 1");
  spec.validate();
  for (const auto& inst : dataset) {
    if (task_of(inst) != spec.task) throw DataError("dataset instance does not match the task");
  }

  std::vector<std::vector<double>> per_run;
  std::vector<InstanceFailure> failures;
  for (int run = 0; run < options.runs; ++run) {
    std::vector<backend::GenerationRequest> requests;
    requests.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) requests.push_back(eval_request(spec, dataset[i], i, run, options));
    auto slots = backend::batch_generate(backend, requests, options.max_concurrency);
    std::vector<std::string> outputs(dataset.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].ok()) {
        outputs[i] = slots[i].response->text;
      } else {
        failures.push_back({run, i, slots[i].error->what()});
      }
    }
    per_run.push_back(score_outputs(spec.task, dataset, outputs));
  }
  MetricReport report = make_report(spec.task, std::move(per_run));
  report.failures = std::move(failures);
  return report;
}

std::unique_ptr<backend::MockBackend> make_gold_echo_backend(const TaskSpec& spec,
                                                             const std::vector<EvalInstance>& dataset,
                                                             const EvalOptions& options) {
  auto mock = std::make_unique<backend::MockBackend>(nullptr, "mock-gold");
  for (int run = 0; run < options.runs; ++run) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      mock->script(eval_request(spec, dataset[i], i, run, options), render_gold(dataset[i]));
    }
  }
  return mock;
}

json to_json(const MetricReport& report) {
  json failures = json::array();
  for (const auto& f : report.failures) failures.push_back({{"run", f.run}, {"instance", f.instance}, {"reason", f.reason}});
  return {{"task", to_string(report.task)},
          {"metrics", report.metric_names},
          {"per_run", report.per_run},
          {"mean", report.mean},
          {"runs", report.per_run.size()},
          {"failures", std::move(failures)}};
}

std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  if (rows.empty()) return {};
  const auto& names = rows.front().second.metric_names;
  std::size_t name_width = 6;
  for (const auto& [model, _] : rows) name_width = std::max(name_width, text::count_code_points(model));
  std::ostringstream os;
  auto pad = [&](const std::string& s) {
    os << s << std::string(name_width - text::count_code_points(s), ' ');
  };
  pad("Model");
  for (const auto& n : names) os << " | " << std::setw(7) << n;
  os << "\n" << std::string(name_width, '-');
  for (std::size_t i = 0; i < names.size(); ++i) os << "-+--------";
  os << "\n";
  for (const auto& [model, report] : rows) {
    pad(model);
    for (double v : report.mean) os << " | " << std::setw(7) << std::fixed << std::setprecision(2) << v * 100.0;
    os << "\n";
  }
  return os.str();
}

}  // namespace medalign::evalkit
