#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "medalign/backend.hpp"
#include "medalign/corpus.hpp"
#include "medalign/metrics.hpp"

namespace medalign::evalkit {

enum class TaskKind { ner, mc_qa, open_qa, dialogue };

TaskKind parse_task(std::string_view name);
std::string_view to_string(TaskKind task);

struct NerInstance {
  std::string text;
  std::vector<std::string> entity_types;
  metrics::EntitySet gold;
};

struct McOption {
  char label = 'A';
  std::string text;
};

struct McInstance {
  std::string question;
  std::vector<McOption> options;
  char answer = 'A';
};

struct QaInstance {
  std::string question;
  std::string answer;
};

struct DialogueInstance {
  std::vector<corpus::Turn> turns;
  std::string gold_response;
};

using EvalInstance = std::variant<NerInstance, McInstance, QaInstance, DialogueInstance>;

TaskKind task_of(const EvalInstance& instance);
void validate(const EvalInstance& instance);

// Dataset lines:
//   ner      {"text","entities":[{"type","mention"}][,"entity_types":[...]]}
//   mc_qa    {"question","options":{"A":...},"answer"}
//   open_qa  {"question","answer"}
//   dialogue {"turns":[{"speaker","text"}],"gold_response"}
// NER instances without "entity_types" get `default_entity_types`, or the
// types of their gold entities when that is empty too.
EvalInstance instance_from_json(TaskKind task, const json& j, const std::vector<std::string>& default_entity_types = {});
std::vector<EvalInstance> load_dataset(const std::filesystem::path& path, TaskKind task,
                                       const std::vector<std::string>& default_entity_types = {});

struct TaskSpec {
  TaskKind task = TaskKind::open_qa;
  std::string description;
  std::vector<EvalInstance> exemplars;
  int shots = 0;

  void validate() const;
};

std::string default_description(TaskKind task);

// Gold label in the same layout the model is asked to produce.
std::string render_gold(const EvalInstance& instance);

struct PromptParts {
  std::string description;
  std::vector<std::string> exemplar_blocks;
  std::string instance_block;

  std::string render() const;
};

inline constexpr std::string_view kBlockSeparator = "\n\n";

// Description, then `shots` exemplars with gold answers (chosen by a seeded
// shuffle of spec.exemplars), then the unanswered test instance.
PromptParts build_prompt_parts(const TaskSpec& spec, const EvalInstance& instance, std::uint64_t seed);
std::string build_prompt(const TaskSpec& spec, const EvalInstance& instance, std::uint64_t seed);

struct ParsedEntities {
  metrics::EntitySet entities;
  std::size_t dropped_lines = 0;
};

// One "type: mention" per line; ASCII or full-width colon; list markers and
// surrounding whitespace are stripped; unknown types and malformed lines are
// dropped and counted. Blank lines are ignored.
ParsedEntities parse_entities(std::string_view output, const std::vector<std::string>& entity_types);

// The first option letter standing alone (not next to another ASCII letter
// or digit); failing that, the option whose text occurs earliest in the
// output (longest text on a tie).
std::optional<char> extract_choice(std::string_view output, const std::vector<McOption>& options);

std::vector<std::string> metric_names(TaskKind task);

// Metric values for one run; a missing output is scored as the empty string.
std::vector<double> score_outputs(TaskKind task, const std::vector<EvalInstance>& instances,
                                  const std::vector<std::string>& outputs);

struct EvalOptions {
  int runs = 5;
  std::uint64_t base_seed = 0;
  int max_concurrency = 1;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 512;
};

// Request for instance `index` in run `run`; both prompt and sampling seed
// derive from base_seed + run.
backend::GenerationRequest eval_request(const TaskSpec& spec, const EvalInstance& instance, std::size_t index,
                                        int run, const EvalOptions& options);

struct InstanceFailure {
  int run = 0;
  std::size_t instance = 0;
  std::string reason;
};

struct MetricReport {
  TaskKind task = TaskKind::open_qa;
  std::vector<std::string> metric_names;
  std::vector<std::vector<double>> per_run;  // [run][metric], in [0, 1]
  std::vector<double> mean;
  std::vector<InstanceFailure> failures;
};

MetricReport make_report(TaskKind task, std::vector<std::vector<double>> per_run);

// `runs` passes over the dataset with seed base_seed + run; a backend failure
// scores that instance as an empty output and is listed in `failures`.
MetricReport run_eval(backend::Backend& backend, const TaskSpec& spec, const std::vector<EvalInstance>& dataset,
                      const EvalOptions& options = {});

// Mock backend answering every request run_eval will issue with the gold label.
std::unique_ptr<backend::MockBackend> make_gold_echo_backend(const TaskSpec& spec,
                                                             const std::vector<EvalInstance>& dataset,
                                                             const EvalOptions& options);

json to_json(const MetricReport& report);

// Scores x100 with two decimals, one row per model.
std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace medalign::evalkit
