#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medalign/backend.hpp"
#include "medalign/corpus.hpp"
#include "medalign/reward.hpp"

namespace medalign::rsft {

enum class SelectionMode { per_prompt_best, global_top_k };

SelectionMode parse_selection_mode(std::string_view name);
std::string_view to_string(SelectionMode mode);

struct SamplingConfig {
  std::size_t n_prompts = 10000;
  int k_gen = 4;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 512;
  std::uint64_t seed = 0;
  SelectionMode selection_mode = SelectionMode::per_prompt_best;
  int top_k = 0;

  void validate() const;
};

// AdamW settings for the fine-tune run; written out, never used here.
struct RsftTrainPreset {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-5;
  double learning_rate = 1e-5;
  double weight_decay = 0.1;
  int iterations = 400;
  int batch_size = 64;
};

struct SampledPrompt {
  std::size_t prompt_id = 0;     // position in the sample
  std::size_t source_index = 0;  // row in the SFT data
  std::string prompt;
};

// Uniform sample of n prompts without replacement: Fisher-Yates over row
// indices with Rng(seed), first n taken. Throws DataError if n > |sft|.
std::vector<SampledPrompt> sample_prompts(const std::vector<corpus::PromptResponse>& sft, std::size_t n,
                                          std::uint64_t seed);

struct Candidate {
  std::size_t prompt_id = 0;
  std::size_t candidate_index = 0;
  std::string prompt;
  std::string text;
  std::optional<double> reward_score;
  double latency_ms = 0.0;
};

struct MissingEntry {
  std::size_t prompt_id = 0;
  int failed = 0;  // candidates that could not be generated
  std::string reason;
};

struct GenerationRun {
  std::vector<Candidate> candidates;
  std::vector<MissingEntry> missing;
};

// Request for candidate k of a prompt; its seed is derived from
// (cfg.seed, prompt_id, k) so every candidate is a distinct request.
backend::GenerationRequest candidate_request(const SampledPrompt& prompt, int k, const SamplingConfig& cfg);

// k_gen candidates per prompt in prompt order. Failed requests (after the
// backend's own retries) are summarized per prompt in `missing`.
GenerationRun generate_candidates(backend::Backend& backend, const std::vector<SampledPrompt>& prompts,
                                  const SamplingConfig& cfg, int max_concurrency);

std::vector<Candidate> score_candidates(const reward::RewardModelParams& params, std::vector<Candidate> candidates);

// per_prompt_best: highest score per prompt, lowest candidate_index on ties,
// prompts in order of first appearance. global_top_k: stable descending sort
// over all candidates, first top_k kept. Throws DataError on unscored input
// and UsageError when top_k <= 0 in global mode.
std::vector<Candidate> select(const std::vector<Candidate>& scored, SelectionMode mode, int top_k);

struct EmitInfo {
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::per_prompt_best;
  int top_k = 0;
  std::size_t prompts = 0;
  std::size_t candidates = 0;
  std::size_t missing = 0;
  std::string reward_params_checksum;
};

struct EmittedFiles {
  std::filesystem::path selected;
  std::filesystem::path config;
  std::filesystem::path manifest;
};

// selected.jsonl ({"prompt","response","reward_score"}), rsft_config
// (key=value) and manifest.json. Throws DataError when nothing is selected.
EmittedFiles emit_finetune_dataset(const std::vector<Candidate>& selected, const RsftTrainPreset& preset,
                                   const EmitInfo& info, const std::filesystem::path& out_dir);

std::string render_preset(const RsftTrainPreset& preset);
// Parses the key=value form written by render_preset.
RsftTrainPreset parse_preset(std::string_view text);

json to_json(const SampledPrompt& p);
SampledPrompt sampled_prompt_from_json(const json& j);
json to_json(const Candidate& c);
Candidate candidate_from_json(const json& j);
json to_json(const MissingEntry& m);

}  // namespace medalign::rsft
