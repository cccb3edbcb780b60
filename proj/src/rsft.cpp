#include "medalign/rsft.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "medalign/error.hpp"
#include "medalign/random.hpp"
#include "medalign/text.hpp"

namespace medalign::rsft {

SelectionMode parse_selection_mode(std::string_view name) {
  if (name == "per_prompt_best") return SelectionMode::per_prompt_best;
  if (name == "global_top_k") return SelectionMode::global_top_k;
  throw UsageError("unknown selection mode \"" + std::string(name) + "\"");
}

std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::per_prompt_best ? "per_prompt_best" : "global_top_k";
}

void SamplingConfig::validate() const {
  if (n_prompts < 1) throw UsageError("n_prompts must be >= 1");
  if (k_gen < 1) throw UsageError("k_gen must be >= 1");
  if (!(temperature > 0.0)) throw UsageError("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw UsageError("top_p must lie in (0, 1]");
  if (max_tokens < 1) throw UsageError("max_tokens must be >= 1");
}

std::vector<SampledPrompt> sample_prompts(const std::vector<corpus::PromptResponse>& sft, std::size_t n,
                                          std::uint64_t seed) {
  if (n > sft.size()) {
    throw DataError("cannot sample " + std::to_string(n) + " prompts from " + std::to_string(sft.size()) + " pairs");
  }
  auto order = shuffled_indices(sft.size(), seed);
  std::vector<SampledPrompt> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, order[i], sft[order[i]].prompt});
  return out;
}

backend::GenerationRequest candidate_request(const SampledPrompt& prompt, int k, const SamplingConfig& cfg) {
  auto req = backend::GenerationRequest::from_prompt(prompt.prompt);
  req.temperature = cfg.temperature;
  req.top_p = cfg.top_p;
  req.max_tokens = cfg.max_tokens;
  req.seed = mix_seed(mix_seed(cfg.seed, prompt.prompt_id), static_cast<std::uint64_t>(k));
  req.request_id = "p" + std::to_string(prompt.prompt_id) + "-c" + std::to_string(k);
  return req;
}

GenerationRun generate_candidates(backend::Backend& backend, const std::vector<SampledPrompt>& prompts,
                                  const SamplingConfig& cfg, int max_concurrency) {
  cfg.validate();
  std::vector<backend::GenerationRequest> requests;
  requests.reserve(prompts.size() * static_cast<std::size_t>(cfg.k_gen));
  for (const auto& p : prompts) {
    for (int k = 0; k < cfg.k_gen; ++k) requests.push_back(candidate_request(p, k, cfg));
  }
  auto slots = backend::batch_generate(backend, requests, max_concurrency);

  GenerationRun run;
  std::size_t slot = 0;
  for (const auto& p : prompts) {
    MissingEntry missing{p.prompt_id, 0, {}};
    for (int k = 0; k < cfg.k_gen; ++k, ++slot) {
      const auto& s = slots[slot];
      if (s.ok()) {
        run.candidates.push_back({p.prompt_id, static_cast<std::size_t>(k), p.prompt, s.response->text,
                                  std::nullopt, s.response->latency_ms});
      } else {
        ++missing.failed;
        if (missing.reason.empty()) missing.reason = s.error->what();
      }
    }
    if (missing.failed > 0) run.missing.push_back(std::move(missing));
  }
  return run;
}

std::vector<Candidate> score_candidates(const reward::RewardModelParams& params, std::vector<Candidate> candidates) {
  for (auto& c : candidates) c.reward_score = reward::score(params, c.prompt, c.text);
  return candidates;
}

std::vector<Candidate> select(const std::vector<Candidate>& scored, SelectionMode mode, int top_k) {
  for (const auto& c : scored) {
    if (!c.reward_score) {
      throw DataError("candidate " + std::to_string(c.candidate_index) + " of prompt " + std::to_string(c.prompt_id) +
                      " has no reward score");
    }
  }
  if (mode == SelectionMode::global_top_k) {
    if (top_k <= 0) throw UsageError("global_top_k selection needs top_k > 0");
    std::vector<Candidate> sorted = scored;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Candidate& a, const Candidate& b) { return *a.reward_score > *b.reward_score; });
    if (sorted.size() > static_cast<std::size_t>(top_k)) sorted.resize(static_cast<std::size_t>(top_k));
    return sorted;
  }

  std::vector<std::size_t> prompt_order;
  std::map<std::size_t, std::size_t> best;  // prompt_id -> index into scored
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& c = scored[i];
    auto it = best.find(c.prompt_id);
    if (it == best.end()) {
      best.emplace(c.prompt_id, i);
      prompt_order.push_back(c.prompt_id);
      continue;
    }
    const auto& cur = scored[it->second];
    if (*c.reward_score > *cur.reward_score ||
        (*c.reward_score == *cur.reward_score && c.candidate_index < cur.candidate_index)) {
      it->second = i;
    }
  }
  std::vector<Candidate> out;
  out.reserve(prompt_order.size());
  for (auto id : prompt_order) out.push_back(scored[best[id]]);
  return out;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::string render_preset(const RsftTrainPreset& preset) {
  std::ostringstream os;
  os << "optimizer=adamw\n"
     << "beta1=" << format_number(preset.beta1) << "\n"
     << "beta2=" << format_number(preset.beta2) << "\n"
     << "epsilon=" << format_number(preset.epsilon) << "\n"
     << "learning_rate=" << format_number(preset.learning_rate) << "\n"
     << "weight_decay=" << format_number(preset.weight_decay) << "\n"
     << "iterations=" << preset.iterations << "\n"
     << "batch_size=" << preset.batch_size << "\n";
  return os.str();
}

RsftTrainPreset parse_preset(std::string_view content) {
  RsftTrainPreset p;
  for (const auto& raw : text::split(content, '\n')) {
    auto line = text::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line without '=': " + line);
    auto key = text::trim(line.substr(0, eq));
    auto value = text::trim(line.substr(eq + 1));
    try {
      if (key == "beta1") p.beta1 = std::stod(value);
      else if (key == "beta2") p.beta2 = std::stod(value);
      else if (key == "epsilon") p.epsilon = std::stod(value);
      else if (key == "learning_rate") p.learning_rate = std::stod(value);
      else if (key == "weight_decay") p.weight_decay = std::stod(value);
      else if (key == "iterations") p.iterations = std::stoi(value);
      else if (key == "batch_size") p.batch_size = std::stoi(value);
    } catch (const std::logic_error&) {
      throw DataError("bad value for " + key + ": " + value);
    }
  }
  return p;
}

EmittedFiles emit_finetune_dataset(const std::vector<Candidate>& selected, const RsftTrainPreset& preset,
                                   const EmitInfo& info, const std::filesystem::path& out_dir) {
  if (selected.empty()) throw DataError("nothing selected; refusing to emit an empty fine-tune set");
  std::filesystem::create_directories(out_dir);
  EmittedFiles files{out_dir / "selected.jsonl", out_dir / "rsft_config", out_dir / "manifest.json"};

  std::vector<json> lines;
  lines.reserve(selected.size());
  for (const auto& c : selected) {
    lines.push_back({{"prompt", c.prompt}, {"response", c.text}, {"reward_score", c.reward_score.value_or(0.0)}});
  }
  write_jsonl(files.selected, lines);
  write_text(files.config, render_preset(preset));

  json manifest = {{"seed", info.seed},
                   {"mode", to_string(info.mode)},
                   {"top_k", info.top_k},
                   {"counts",
                    {{"prompts", info.prompts},
                     {"candidates", info.candidates},
                     {"missing", info.missing},
                     {"selected", selected.size()}}},
                   {"reward_params_checksum", info.reward_params_checksum}};
  write_text(files.manifest, manifest.dump(2) + "\n");
  return files;
}

json to_json(const SampledPrompt& p) {
  return {{"prompt_id", p.prompt_id}, {"source_index", p.source_index}, {"prompt", p.prompt}};
}

SampledPrompt sampled_prompt_from_json(const json& j) {
  return {require_field(j, "prompt_id").get<std::size_t>(), j.value("source_index", std::size_t{0}),
          require_string(j, "prompt")};
}

json to_json(const Candidate& c) {
  json j = {{"prompt_id", c.prompt_id},
            {"candidate_index", c.candidate_index},
            {"prompt", c.prompt},
            {"text", c.text},
            {"latency_ms", c.latency_ms}};
  if (c.reward_score) j["reward_score"] = *c.reward_score;
  return j;
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.prompt_id = require_field(j, "prompt_id").get<std::size_t>();
  c.candidate_index = require_field(j, "candidate_index").get<std::size_t>();
  c.prompt = require_string(j, "prompt");
  c.text = require_string(j, "text");
  c.latency_ms = j.value("latency_ms", 0.0);
  if (auto it = j.find("reward_score"); it != j.end() && !it->is_null()) c.reward_score = it->get<double>();
  return c;
}

json to_json(const MissingEntry& m) {
  return {{"prompt_id", m.prompt_id}, {"failed", m.failed}, {"reason", m.reason}};
}

}  // namespace medalign::rsft
