#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medalign/backend.hpp"
#include "medalign/bias.hpp"
#include "medalign/corpus.hpp"
#include "medalign/error.hpp"
#include "medalign/evalkit.hpp"
#include "medalign/human.hpp"
#include "medalign/jsonl.hpp"
#include "medalign/manifest.hpp"
#include "medalign/pack.hpp"
#include "medalign/random.hpp"
#include "medalign/reward.hpp"
#include "medalign/reward_train.hpp"
#include "medalign/rsft.hpp"
#include "medalign/text.hpp"
#include "medalign/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace medalign;

namespace {

struct Globals {
  fs::path run_dir = "run";
  std::uint64_t seed = 0;
  std::string tokenizer = "builtin:char";
  std::string backend = "mock";
  std::string record_inner = "http";
  backend::BackendConfig backend_cfg;
  std::string model_name = "model";
};

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--run-dir", g.run_dir, "Run directory for outputs and manifests")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed recorded in every manifest")->capture_default_str();
  app.add_option("--tokenizer", g.tokenizer, "builtin:char or a vocabulary file")->capture_default_str();
  app.add_option("--backend", g.backend, "http | replay | record | mock | mock-neutral | mock-agree | mock-gold")
      ->capture_default_str();
  app.add_option("--record-inner", g.record_inner, "Backend wrapped by --backend record (http | mock)")
      ->capture_default_str();
  app.add_option("--base-url", g.backend_cfg.base_url)->capture_default_str();
  app.add_option("--model", g.backend_cfg.model, "Model name sent to the API")->capture_default_str();
  app.add_option("--api-key-env", g.backend_cfg.api_key_env)->capture_default_str();
  app.add_option("--timeout-ms", g.backend_cfg.timeout_ms)->capture_default_str();
  app.add_option("--max-retries", g.backend_cfg.max_retries)->capture_default_str();
  app.add_option("--backoff-base-ms", g.backend_cfg.backoff_base_ms)->capture_default_str();
  app.add_option("--max-concurrency", g.backend_cfg.max_concurrency)->capture_default_str();
  app.add_option("--backend-log", g.backend_cfg.log_path, "Log for replay / record");
  app.add_flag("!--no-send-seed", g.backend_cfg.send_seed, "Leave the seed out of HTTP requests");
  app.add_option("--model-name", g.model_name, "Row label in report tables")->capture_default_str();
}

// Hash-derived text; stands in for a model when no server is around.
std::shared_ptr<backend::Backend> echo_mock() {
  return std::make_shared<backend::MockBackend>(
      [](const backend::GenerationRequest& r) { return "回答 " + backend::request_hash(r).substr(0, 12); }, "mock");
}

std::shared_ptr<backend::Backend> open_backend(const Globals& g) {
  auto cfg = g.backend_cfg;
  if (g.backend == "mock") return echo_mock();
  if (g.backend == "record" && g.record_inner == "mock") {
    if (cfg.log_path.empty()) throw UsageError("--backend record needs --backend-log");
    return std::make_shared<backend::RecordingBackend>(echo_mock(), cfg.log_path);
  }
  if (g.backend == "http" || g.backend == "replay" || g.backend == "record") {
    if (g.backend == "record" && g.record_inner != "http") throw UsageError("--record-inner must be http or mock");
    cfg.kind = g.backend;
    return backend::make_backend(cfg);
  }
  throw UsageError("backend " + g.backend + " is not available for this command");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : text::split(s, ',')) {
    auto t = text::trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

void report_rejects(const fs::path& path, const std::vector<LineError>& rejects) {
  for (const auto& r : rejects) std::cerr << path.string() << ":" << r.line << ": " << r.message << "\n";
}

std::vector<corpus::PromptResponse> load_pairs(const fs::path& path, bool strict = false) {
  auto in = corpus::ingest_as<corpus::PromptResponse>(path, strict);
  report_rejects(path, in.rejects);
  return std::move(in.records);
}

// Pair lines ({"prompt","chosen","rejected"}) are used as they are; preference
// lines ({"prompt","accepted","rejected"[,"intermediates"]}) are expanded.
// One group per input line.
std::vector<std::vector<reward::PreferencePair>> load_preference_groups(const fs::path& path,
                                                                        const std::string& task) {
  if (task != "adjacent" && task != "binary") throw UsageError("--task must be adjacent or binary");
  auto parse = [&](const json& j) {
    std::vector<reward::PreferencePair> out;
    if (j.contains("chosen")) {
      out.push_back(reward::pair_from_json(j));
      return out;
    }
    auto raw = corpus::preference_from_json(j);
    std::vector<std::string> mids;
    if (auto it = j.find("intermediates"); it != j.end()) mids = it->get<std::vector<std::string>>();
    auto ranked = reward::augment_ranking(raw, mids);
    if (task == "binary") {
      out.push_back(reward::binary_pair(ranked));
    } else {
      out = reward::adjacent_pairs(ranked);
    }
    return out;
  };
  auto in = read_jsonl<std::vector<reward::PreferencePair>>(path, parse);
  report_rejects(path, in.rejects);
  if (in.records.empty()) throw DataError(path.string() + ": no preference pairs");
  return std::move(in.records);
}

std::vector<reward::PreferencePair> flatten(const std::vector<std::vector<reward::PreferencePair>>& groups) {
  std::vector<reward::PreferencePair> pairs;
  for (const auto& g : groups) pairs.insert(pairs.end(), g.begin(), g.end());
  return pairs;
}

// Split whole lines, so pairs expanded from one instance stay together.
reward::SplitPairs split_groups(const std::vector<std::vector<reward::PreferencePair>>& groups,
                                const reward::SplitSpec& split, std::uint64_t seed) {
  split.validate(groups.size());
  auto order = shuffled_indices(groups.size(), seed);
  reward::SplitPairs out;
  for (std::size_t i = 0; i < split.total(); ++i) {
    auto& dst = i < split.train ? out.train : (i < split.train + split.validation ? out.validation : out.test);
    const auto& g = groups[order[i]];
    dst.insert(dst.end(), g.begin(), g.end());
  }
  return out;
}

// Best-vs-worst pair of each validation instance, same cut as split_groups.
std::vector<reward::PreferencePair> binary_validation(const std::vector<std::vector<reward::PreferencePair>>& groups,
                                                      const reward::SplitSpec& split, std::uint64_t seed) {
  auto order = shuffled_indices(groups.size(), seed);
  std::vector<reward::PreferencePair> out;
  for (std::size_t i = split.train; i < split.train + split.validation; ++i) {
    const auto& g = groups[order[i]];
    out.push_back({g.front().prompt, g.front().chosen, g.back().rejected, static_cast<int>(g.size())});
  }
  return out;
}

StageManifest begin(const std::string& command, const Globals& g) {
  fs::create_directories(g.run_dir);
  StageManifest m;
  m.command = command;
  m.seed = g.seed;
  return m;
}

void finish(const StageManifest& m, const Globals& g) {
  auto path = m.write(g.run_dir);
  std::cerr << "manifest: " << path.string() << "\n";
}

json backend_params(const Globals& g) {
  return {{"backend", g.backend},
          {"model", g.backend_cfg.model},
          {"base_url", g.backend_cfg.base_url},
          {"max_concurrency", g.backend_cfg.max_concurrency},
          {"max_retries", g.backend_cfg.max_retries}};
}

// ---- preprocess

struct PreprocessArgs {
  std::vector<fs::path> qa;
  std::vector<fs::path> dialogue;
  std::vector<fs::path> safety;
  std::vector<fs::path> documents;
  fs::path out;
  fs::path docs_out;
  bool strict = false;
  bool no_scrub = false;
};

void run_preprocess(const PreprocessArgs& a, const Globals& g) {
  if (a.qa.empty() && a.dialogue.empty() && a.documents.empty()) {
    throw UsageError("preprocess needs --qa, --dialogue or --documents");
  }
  auto m = begin("preprocess", g);
  std::vector<corpus::QAPair> qa;
  std::vector<corpus::DialogueCase> dialogues;
  std::vector<corpus::PromptResponse> safety;
  for (const auto& p : a.qa) {
    auto in = corpus::ingest_as<corpus::QAPair>(p, a.strict);
    report_rejects(p, in.rejects);
    qa.insert(qa.end(), in.records.begin(), in.records.end());
    m.add_input("qa", p);
  }
  for (const auto& p : a.dialogue) {
    auto in = corpus::ingest_as<corpus::DialogueCase>(p, a.strict);
    report_rejects(p, in.rejects);
    dialogues.insert(dialogues.end(), in.records.begin(), in.records.end());
    m.add_input("dialogue", p);
  }
  for (const auto& p : a.safety) {
    auto in = load_pairs(p, a.strict);
    for (auto& r : in) r.origin = corpus::Origin::safety;
    safety.insert(safety.end(), in.begin(), in.end());
    m.add_input("safety", p);
  }

  qa = corpus::deduplicate(std::move(qa));
  dialogues = corpus::deduplicate(std::move(dialogues));
  auto built = corpus::build_sft_pairs(qa, dialogues);
  for (const auto& s : built.skipped) std::cerr << "skipped dialogue " << s.id << ": " << s.reason << "\n";
  auto merged = corpus::merge_with_safety(std::move(built.pairs), safety);
  if (!a.no_scrub) {
    for (auto& p : merged) p = corpus::scrub(std::move(p));
    merged = corpus::deduplicate(std::move(merged));
  }

  const fs::path out = a.out.empty() ? g.run_dir / "sft_pairs.jsonl" : a.out;
  if (!a.qa.empty() || !a.dialogue.empty()) {
    std::vector<json> lines;
    for (const auto& p : merged) lines.push_back(corpus::to_json(p));
    write_jsonl(out, lines);
    m.add_output("sft_pairs", out);
    std::cout << "pairs=" << merged.size() << " skipped_dialogues=" << built.skipped.size() << "\n";
  }

  if (!a.documents.empty()) {
    std::vector<corpus::Document> docs;
    for (const auto& p : a.documents) {
      auto in = corpus::ingest_as<corpus::Document>(p, a.strict);
      report_rejects(p, in.rejects);
      docs.insert(docs.end(), in.records.begin(), in.records.end());
      m.add_input("documents", p);
    }
    docs = corpus::deduplicate(std::move(docs));
    if (!a.no_scrub) {
      for (auto& d : docs) d = corpus::scrub(std::move(d));
    }
    const fs::path dout = a.docs_out.empty() ? g.run_dir / "documents.jsonl" : a.docs_out;
    std::vector<json> lines;
    for (const auto& d : docs) lines.push_back(corpus::to_json(d));
    write_jsonl(dout, lines);
    m.add_output("documents", dout);
    std::cout << "documents=" << docs.size() << "\n";
  }
  m.params = {{"strict", a.strict}, {"scrub", !a.no_scrub}};
  finish(m, g);
}

// ---- pack

struct PackArgs {
  fs::path in;
  fs::path documents;
  fs::path out;
  std::size_t max_len = 4096;
  std::string overlong = "skip";
  bool full_loss = false;
};

void run_pack(const PackArgs& a, const Globals& g) {
  if (a.in.empty() == a.documents.empty()) throw UsageError("pack needs exactly one of --in or --documents");
  auto m = begin("pack", g);
  auto tok = make_tokenizer(g.tokenizer);
  pack::PackConfig cfg;
  cfg.max_len = a.max_len;
  cfg.overlong_policy = pack::parse_overlong_policy(a.overlong);
  cfg.response_only_loss = !a.full_loss;
  cfg.validate();
  m.params = {{"tokenizer", tok->name()},
              {"max_len", cfg.max_len},
              {"overlong_policy", pack::to_string(cfg.overlong_policy)},
              {"response_only_loss", cfg.response_only_loss},
              {"boundary_token", tok->boundary_id()}};

  std::vector<json> lines;
  fs::path out;
  if (!a.in.empty()) {
    m.add_input("pairs", a.in);
    auto pairs = load_pairs(a.in);
    auto res = pack::pack_pairs(pairs, *tok, cfg);
    for (const auto& s : res.skipped) std::cerr << "skipped pair " << s.pair_index << " (" << s.cost << " tokens)\n";
    for (const auto& s : res.sequences) lines.push_back(pack::to_json(s));
    out = a.out.empty() ? g.run_dir / "packed.jsonl" : a.out;
    std::cout << "pairs=" << pairs.size() << " sequences=" << res.sequences.size()
              << " skipped=" << res.skipped.size() << " truncated=" << res.truncated.size() << "\n";
  } else {
    m.add_input("documents", a.documents);
    auto in = corpus::ingest_as<corpus::Document>(a.documents);
    report_rejects(a.documents, in.rejects);
    auto windows = pack::make_pretrain_examples(in.records, *tok, cfg);
    for (const auto& w : windows) lines.push_back({{"token_ids", w}});
    out = a.out.empty() ? g.run_dir / "pretrain.jsonl" : a.out;
    std::cout << "documents=" << in.records.size() << " examples=" << windows.size() << "\n";
  }
  write_jsonl(out, lines);
  m.add_output("packed", out);
  finish(m, g);
}

// ---- reward-train / reward-eval

struct RewardTrainArgs {
  fs::path pairs;
  std::string task = "adjacent";
  std::string preset = "desk";
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::uint32_t> hash_dim;
  std::optional<std::size_t> eval_interval;
  std::string split;
  fs::path out;
};

reward::SplitSpec parse_split(const std::string& s, std::size_t n) {
  if (s.empty()) return reward::SplitSpec::proportional(n);
  auto parts = split_list(s);
  if (parts.size() != 3) throw UsageError("--split takes train,validation,test");
  try {
    return {std::stoul(parts[0]), std::stoul(parts[1]), std::stoul(parts[2])};
  } catch (const std::logic_error&) {
    throw UsageError("--split takes three non-negative integers");
  }
}

void run_reward_train(const RewardTrainArgs& a, const Globals& g) {
  auto m = begin("reward-train", g);
  m.add_input("pairs", a.pairs);
  auto groups = load_preference_groups(a.pairs, a.task);

  reward::RewardTrainConfig cfg;
  if (a.preset == "desk") {
    cfg = reward::RewardTrainConfig::desk();
  } else if (a.preset == "recorded") {
    cfg = reward::RewardTrainConfig::recorded();
  } else {
    throw UsageError("--preset must be desk or recorded");
  }
  cfg.seed = g.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr) cfg.peak_lr = *a.lr;
  if (a.hash_dim) cfg.features.hash_dim = *a.hash_dim;
  if (a.eval_interval) cfg.eval_interval = *a.eval_interval;
  cfg.validate();

  auto split = parse_split(a.split, groups.size());
  auto data = split_groups(groups, split, cfg.seed);
  auto result = reward::train_reward(data, cfg);
  const double binary_val = reward::eval_accuracy(result.params, binary_validation(groups, split, cfg.seed));

  const fs::path out = a.out.empty() ? g.run_dir / "reward.params" : a.out;
  reward::save_params(out, result.params);
  const fs::path curve = g.run_dir / "reward_curve.csv";
  write_text(curve, reward::curve_csv(result.curve));
  m.add_output("params", out);
  m.add_output("curve", curve);
  m.params = {{"task", a.task},
              {"preset", a.preset},
              {"instances", groups.size()},
              {"split", {split.train, split.validation, split.test}},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"peak_lr", cfg.peak_lr},
              {"total_steps", result.total_steps},
              {"warmup_steps", result.warmup_steps},
              {"val_accuracy", result.val_accuracy},
              {"binary_val_accuracy", binary_val},
              {"features", reward::to_json(cfg.features)},
              {"params_checksum", reward::params_checksum(result.params)}};
  finish(m, g);

  std::printf("instances=%zu train=%zu val=%zu test=%zu (pairs %zu/%zu/%zu) steps=%zu\n", groups.size(),
              split.train, split.validation, split.test, data.train.size(), data.validation.size(),
              data.test.size(), result.total_steps);
  std::printf("train_accuracy=%.4f val_accuracy=%.4f binary_val_accuracy=%.4f", result.train_accuracy,
              result.val_accuracy, binary_val);
  if (result.test_accuracy) std::printf(" test_accuracy=%.4f", *result.test_accuracy);
  std::printf("\nparams=%s sha256=%s\n", out.string().c_str(), reward::params_checksum(result.params).c_str());
}

struct RewardEvalArgs {
  fs::path params;
  fs::path pairs;
  std::string task = "adjacent";
};

void run_reward_eval(const RewardEvalArgs& a, const Globals& g) {
  auto m = begin("reward-eval", g);
  m.add_input("params", a.params);
  m.add_input("pairs", a.pairs);
  auto params = reward::load_params(a.params);
  auto pairs = flatten(load_preference_groups(a.pairs, a.task));
  const double acc = reward::eval_accuracy(params, pairs);
  m.params = {{"task", a.task}, {"pairs", pairs.size()}, {"accuracy", acc}};
  finish(m, g);
  std::printf("pairs=%zu accuracy=%.4f\n", pairs.size(), acc);
}

// ---- rsft

struct RsftArgs {
  fs::path sft;
  fs::path params;
  std::size_t n_prompts = 10000;
  int k_gen = 4;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 512;
  std::string mode = "per_prompt_best";
  int top_k = 0;
};

fs::path rsft_dir(const Globals& g) { return g.run_dir / "rsft"; }

rsft::SamplingConfig sampling(const RsftArgs& a, const Globals& g) {
  rsft::SamplingConfig cfg;
  cfg.n_prompts = a.n_prompts;
  cfg.k_gen = a.k_gen;
  cfg.temperature = a.temperature;
  cfg.top_p = a.top_p;
  cfg.max_tokens = a.max_tokens;
  cfg.seed = g.seed;
  cfg.selection_mode = rsft::parse_selection_mode(a.mode);
  cfg.top_k = a.top_k;
  cfg.validate();
  return cfg;
}

std::vector<rsft::Candidate> read_candidates(const fs::path& path) {
  auto in = read_jsonl<rsft::Candidate>(path, rsft::candidate_from_json, true);
  return std::move(in.records);
}

void write_candidates(const fs::path& path, const std::vector<rsft::Candidate>& cs) {
  std::vector<json> lines;
  for (const auto& c : cs) lines.push_back(rsft::to_json(c));
  write_jsonl(path, lines);
}

void run_rsft_sample(const RsftArgs& a, const Globals& g) {
  if (a.sft.empty()) throw UsageError("rsft sample needs --sft");
  auto cfg = sampling(a, g);
  auto m = begin("rsft-sample", g);
  m.add_input("sft", a.sft);
  auto pairs = load_pairs(a.sft);
  auto prompts = rsft::sample_prompts(pairs, cfg.n_prompts, cfg.seed);
  std::vector<json> lines;
  for (const auto& p : prompts) lines.push_back(rsft::to_json(p));
  const fs::path out = rsft_dir(g) / "prompts.jsonl";
  write_jsonl(out, lines);
  m.add_output("prompts", out);
  m.params = {{"n_prompts", cfg.n_prompts}};
  finish(m, g);
  std::cout << "prompts=" << prompts.size() << "\n";
}

void run_rsft_generate(const RsftArgs& a, const Globals& g) {
  auto cfg = sampling(a, g);
  auto m = begin("rsft-generate", g);
  const fs::path in = rsft_dir(g) / "prompts.jsonl";
  m.add_input("prompts", in);
  auto prompts = read_jsonl<rsft::SampledPrompt>(in, rsft::sampled_prompt_from_json, true).records;
  auto be = open_backend(g);
  auto run = rsft::generate_candidates(*be, prompts, cfg, g.backend_cfg.max_concurrency);
  const fs::path out = rsft_dir(g) / "candidates.jsonl";
  write_candidates(out, run.candidates);
  std::vector<json> missing;
  for (const auto& e : run.missing) missing.push_back(rsft::to_json(e));
  const fs::path miss = rsft_dir(g) / "missing.jsonl";
  write_jsonl(miss, missing);
  m.add_output("candidates", out);
  m.add_output("missing", miss);
  m.params = backend_params(g);
  m.params["k_gen"] = cfg.k_gen;
  m.params["temperature"] = cfg.temperature;
  m.params["top_p"] = cfg.top_p;
  m.params["max_tokens"] = cfg.max_tokens;
  finish(m, g);
  std::cout << "candidates=" << run.candidates.size() << " prompts_with_missing=" << run.missing.size() << "\n";
}

void run_rsft_score(const RsftArgs& a, const Globals& g) {
  if (a.params.empty()) throw UsageError("rsft score needs --params");
  auto m = begin("rsft-score", g);
  const fs::path in = rsft_dir(g) / "candidates.jsonl";
  m.add_input("candidates", in);
  m.add_input("params", a.params);
  auto params = reward::load_params(a.params);
  auto scored = rsft::score_candidates(params, read_candidates(in));
  const fs::path out = rsft_dir(g) / "scored.jsonl";
  write_candidates(out, scored);
  m.add_output("scored", out);
  m.params = {{"reward_params_checksum", reward::params_checksum(params)}};
  finish(m, g);
  std::cout << "scored=" << scored.size() << "\n";
}

void run_rsft_select(const RsftArgs& a, const Globals& g) {
  auto cfg = sampling(a, g);
  auto m = begin("rsft-select", g);
  const fs::path in = rsft_dir(g) / "scored.jsonl";
  m.add_input("scored", in);
  auto selected = rsft::select(read_candidates(in), cfg.selection_mode, cfg.top_k);
  const fs::path out = rsft_dir(g) / "selected_candidates.jsonl";
  write_candidates(out, selected);
  m.add_output("selected", out);
  m.params = {{"mode", rsft::to_string(cfg.selection_mode)}, {"top_k", cfg.top_k}};
  finish(m, g);
  std::cout << "selected=" << selected.size() << "\n";
}

void run_rsft_emit(const RsftArgs& a, const Globals& g) {
  if (a.params.empty()) throw UsageError("rsft emit needs --params");
  auto cfg = sampling(a, g);
  auto m = begin("rsft-emit", g);
  const auto dir = rsft_dir(g);
  const fs::path prompts = dir / "prompts.jsonl";
  const fs::path candidates = dir / "candidates.jsonl";
  const fs::path missing = dir / "missing.jsonl";
  const fs::path selected_path = dir / "selected_candidates.jsonl";
  for (const auto& p : {prompts, candidates, missing, selected_path}) m.add_input(p.stem().string(), p);
  m.add_input("params", a.params);

  rsft::EmitInfo info;
  info.seed = g.seed;
  info.mode = cfg.selection_mode;
  info.top_k = cfg.top_k;
  info.prompts = read_jsonl_values(prompts).size();
  info.candidates = read_jsonl_values(candidates).size();
  info.missing = read_jsonl_values(missing).size();
  info.reward_params_checksum = reward::params_checksum(reward::load_params(a.params));
  auto files = rsft::emit_finetune_dataset(read_candidates(selected_path), rsft::RsftTrainPreset{}, info,
                                           dir / "finetune");
  m.add_output("selected", files.selected);
  m.add_output("config", files.config);
  m.add_output("manifest", files.manifest);
  finish(m, g);
  std::cout << files.config.string() << "\n" << read_text(files.config);
}

// ---- eval

struct EvalArgs {
  fs::path data;
  fs::path exemplars;
  std::string task;
  int shots = 0;
  std::string description;
  std::string entity_types;
  int runs = 5;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 512;
};

void run_eval_cmd(const EvalArgs& a, const Globals& g) {
  auto m = begin("eval", g);
  const auto task = evalkit::parse_task(a.task);
  const auto types = split_list(a.entity_types);
  m.add_input("data", a.data);
  auto dataset = evalkit::load_dataset(a.data, task, types);
  if (dataset.empty()) throw DataError(a.data.string() + ": empty dataset");

  evalkit::TaskSpec spec;
  spec.task = task;
  spec.description = a.description.empty() ? evalkit::default_description(task) : a.description;
  spec.shots = a.shots;
  if (!a.exemplars.empty()) {
    m.add_input("exemplars", a.exemplars);
    spec.exemplars = evalkit::load_dataset(a.exemplars, task, types);
  }
  spec.validate();

  evalkit::EvalOptions opts;
  opts.runs = a.runs;
  opts.base_seed = g.seed;
  opts.max_concurrency = g.backend_cfg.max_concurrency;
  opts.temperature = a.temperature;
  opts.top_p = a.top_p;
  opts.max_tokens = a.max_tokens;

  std::shared_ptr<backend::Backend> be;
  if (g.backend == "mock-gold") {
    be = evalkit::make_gold_echo_backend(spec, dataset, opts);
  } else {
    be = open_backend(g);
  }
  auto report = evalkit::run_eval(*be, spec, dataset, opts);
  for (const auto& f : report.failures) {
    std::cerr << "run " << f.run << " instance " << f.instance << ": " << f.reason << "\n";
  }
  const fs::path out = g.run_dir / ("eval_" + std::string(evalkit::to_string(task)) + ".json");
  json j = evalkit::to_json(report);
  j["model"] = g.model_name;
  write_text(out, j.dump(2) + "\n");
  m.add_output("report", out);
  m.params = backend_params(g);
  m.params["task"] = evalkit::to_string(task);
  m.params["shots"] = a.shots;
  m.params["runs"] = a.runs;
  finish(m, g);
  std::cout << evalkit::render_table({{g.model_name, report}});
}

// ---- bias

struct BiasArgs {
  std::vector<fs::path> scales;
  double temperature = 0.8;
  int max_tokens = 64;
};

void run_bias(const BiasArgs& a, const Globals& g) {
  auto m = begin("bias", g);
  std::vector<std::pair<std::string, bias::BiasReport>> rows;
  json all = json::array();
  for (const auto& path : a.scales) {
    m.add_input("scale", path);
    auto scale = bias::load_scale(path);
    std::shared_ptr<backend::Backend> be;
    const int levels = static_cast<int>(scale.levels.size());
    if (g.backend == "mock-neutral") {
      be = bias::make_fixed_answer_backend(scale, bias::neutral_level(levels));
    } else if (g.backend == "mock-agree") {
      be = bias::make_fixed_answer_backend(scale, levels);
    } else {
      be = open_backend(g);
    }
    bias::ScaleRunOptions opts;
    opts.max_concurrency = g.backend_cfg.max_concurrency;
    opts.temperature = a.temperature;
    opts.max_tokens = a.max_tokens;
    opts.seed = g.seed;
    auto report = bias::run_scale(*be, scale, opts);
    for (const auto& s : report.statements) {
      if (!s.error.empty()) std::cerr << scale.name << "/" << s.id << ": " << s.error << "\n";
    }
    all.push_back(bias::to_json(report));
    rows.emplace_back(g.model_name, std::move(report));
  }
  const fs::path out = g.run_dir / "bias.json";
  write_text(out, json{{"model", g.model_name}, {"scales", all}}.dump(2) + "\n");
  m.add_output("report", out);
  m.params = backend_params(g);
  finish(m, g);
  std::cout << bias::render_table(rows);
  for (const auto& [model, r] : rows) std::printf("%s average=%.4f\n", r.scale_name.c_str(), r.average);
}

// ---- human-agg

void run_human_agg(const fs::path& in, const Globals& g) {
  auto m = begin("human-agg", g);
  m.add_input("scores", in);
  auto file = evalkit::read_human_scores(in);
  auto agg = evalkit::aggregate_human_scores(file.records);
  for (const auto& r : file.rejected) std::cerr << in.string() << ":" << r.line << ": " << r.reason << "\n";
  for (const auto& r : agg.rejected) std::cerr << in.string() << ": " << r.reason << "\n";
  if (agg.models.empty()) throw DataError(in.string() + ": no valid score records");
  const fs::path out = g.run_dir / "human_scores.json";
  write_text(out, evalkit::to_json(agg).dump(2) + "\n");
  m.add_output("report", out);
  finish(m, g);
  std::cout << evalkit::render_table(agg);
}

// ---- stats

void run_stats(const fs::path& in, const std::string& schema_name, bool strict, const Globals& g) {
  const auto schema = corpus::parse_schema(schema_name);
  auto tok = make_tokenizer(g.tokenizer);
  auto res = corpus::ingest(in, schema, strict);
  report_rejects(in, res.rejects);
  auto s = corpus::dataset_stats(res, *tok);
  std::cout << "instances=" << s.instances << "\n"
            << "tokens=" << s.tokens << "\n"
            << "bytes=" << s.bytes << "\n"
            << "rejects=" << res.rejects.size() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical alignment pipeline: corpus preparation, packing, reward modeling, rejection sampling, "
               "evaluation and bias probes."};
  app.set_config("--config", "", "INI file; sections name subcommands, flags override it");
  app.require_subcommand(1);
  Globals g;

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Build deduplicated, scrubbed SFT pairs");
  c_pre->add_option("--qa", pre.qa, "QA JSON-lines files");
  c_pre->add_option("--dialogue", pre.dialogue, "Dialogue JSON-lines files");
  c_pre->add_option("--safety", pre.safety, "Safety pair JSON-lines files");
  c_pre->add_option("--documents", pre.documents, "Pretraining document files");
  c_pre->add_option("--out", pre.out, "SFT pairs output (default <run-dir>/sft_pairs.jsonl)");
  c_pre->add_option("--documents-out", pre.docs_out, "Documents output (default <run-dir>/documents.jsonl)");
  c_pre->add_flag("--strict", pre.strict, "Fail on the first malformed line");
  c_pre->add_flag("--no-scrub", pre.no_scrub, "Keep phone / ID / e-mail strings");

  PackArgs pk;
  auto* c_pack = app.add_subcommand("pack", "Pack pairs (or documents) into fixed-length sequences");
  c_pack->add_option("--in", pk.in, "Pair JSON-lines file");
  c_pack->add_option("--documents", pk.documents, "Document JSON-lines file (pretraining windows)");
  c_pack->add_option("--out", pk.out, "Output JSON-lines file");
  c_pack->add_option("--max-len", pk.max_len)->capture_default_str();
  c_pack->add_option("--overlong", pk.overlong, "skip | truncate_prompt_left")->capture_default_str();
  c_pack->add_flag("--full-loss", pk.full_loss, "Count prompt tokens in the loss mask");

  RewardTrainArgs rt;
  auto* c_rt = app.add_subcommand("reward-train", "Train the pairwise reward model");
  c_rt->add_option("--pairs", rt.pairs, "Pair or preference JSON-lines file")->required();
  c_rt->add_option("--task", rt.task, "adjacent | binary (preference lines only)")->capture_default_str();
  c_rt->add_option("--preset", rt.preset, "desk | recorded")->capture_default_str();
  c_rt->add_option("--epochs", rt.epochs);
  c_rt->add_option("--batch-size", rt.batch_size);
  c_rt->add_option("--lr", rt.lr, "Peak learning rate");
  c_rt->add_option("--hash-dim", rt.hash_dim);
  c_rt->add_option("--eval-interval", rt.eval_interval);
  c_rt->add_option("--split", rt.split, "train,validation,test counted in input lines (default 38:1:1)");
  c_rt->add_option("--out", rt.out, "Params file (default <run-dir>/reward.params)");

  RewardEvalArgs re;
  auto* c_re = app.add_subcommand("reward-eval", "Pairwise accuracy of a trained reward model");
  c_re->add_option("--params", re.params)->required();
  c_re->add_option("--pairs", re.pairs)->required();
  c_re->add_option("--task", re.task, "adjacent | binary")->capture_default_str();

  RsftArgs rs;
  auto* c_rsft = app.add_subcommand("rsft", "Rejection sampling stages sharing <run-dir>/rsft");
  c_rsft->require_subcommand(1);
  c_rsft->fallthrough();
  c_rsft->add_option("--n-prompts", rs.n_prompts)->capture_default_str();
  c_rsft->add_option("--k", rs.k_gen, "Candidates per prompt")->capture_default_str();
  c_rsft->add_option("--temperature", rs.temperature)->capture_default_str();
  c_rsft->add_option("--top-p", rs.top_p)->capture_default_str();
  c_rsft->add_option("--max-tokens", rs.max_tokens)->capture_default_str();
  c_rsft->add_option("--mode", rs.mode, "per_prompt_best | global_top_k")->capture_default_str();
  c_rsft->add_option("--top-k", rs.top_k)->capture_default_str();
  c_rsft->add_option("--sft", rs.sft, "SFT pair file to sample prompts from");
  c_rsft->add_option("--params", rs.params, "Reward params file");
  auto* c_sample = c_rsft->add_subcommand("sample", "Sample prompts");
  auto* c_gen = c_rsft->add_subcommand("generate", "Generate candidates");
  auto* c_score = c_rsft->add_subcommand("score", "Score candidates with the reward model");
  auto* c_select = c_rsft->add_subcommand("select", "Select candidates");
  auto* c_emit = c_rsft->add_subcommand("emit", "Write the fine-tune dataset and preset");
  for (auto* sub : {c_sample, c_gen, c_score, c_select, c_emit}) sub->fallthrough();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Few-shot evaluation, averaged over runs");
  c_eval->add_option("--task", ev.task, "ner | mc_qa | open_qa | dialogue")->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--exemplars", ev.exemplars);
  c_eval->add_option("--shots", ev.shots)->capture_default_str();
  c_eval->add_option("--description", ev.description);
  c_eval->add_option("--entity-types", ev.entity_types, "Comma-separated NER types");
  c_eval->add_option("--runs", ev.runs)->capture_default_str();
  c_eval->add_option("--temperature", ev.temperature)->capture_default_str();
  c_eval->add_option("--top-p", ev.top_p)->capture_default_str();
  c_eval->add_option("--max-tokens", ev.max_tokens)->capture_default_str();

  BiasArgs bs;
  auto* c_bias = app.add_subcommand("bias", "Administer attitude scales");
  c_bias->add_option("--scale", bs.scales, "Scale JSON file(s)")->required();
  c_bias->add_option("--temperature", bs.temperature)->capture_default_str();
  c_bias->add_option("--max-tokens", bs.max_tokens)->capture_default_str();

  fs::path human_in;
  auto* c_human = app.add_subcommand("human-agg", "Aggregate 1-3 human ratings");
  c_human->add_option("--in", human_in)->required();

  fs::path stats_in;
  std::string stats_schema;
  bool stats_strict = false;
  auto* c_stats = app.add_subcommand("stats", "Count instances, tokens and bytes");
  c_stats->add_option("--in", stats_in)->required();
  c_stats->add_option("--schema", stats_schema, "document | qa | dialogue | preference | pair")->required();
  c_stats->add_flag("--strict", stats_strict);

  for (auto* sub : app.get_subcommands({})) add_globals(*sub, g);
  for (auto* sub : c_rsft->get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_pre) run_preprocess(pre, g);
    else if (*c_pack) run_pack(pk, g);
    else if (*c_rt) run_reward_train(rt, g);
    else if (*c_re) run_reward_eval(re, g);
    else if (*c_sample) run_rsft_sample(rs, g);
    else if (*c_gen) run_rsft_generate(rs, g);
    else if (*c_score) run_rsft_score(rs, g);
    else if (*c_select) run_rsft_select(rs, g);
    else if (*c_emit) run_rsft_emit(rs, g);
    else if (*c_eval) run_eval_cmd(ev, g);
    else if (*c_bias) run_bias(bs, g);
    else if (*c_human) run_human_agg(human_in, g);
    else if (*c_stats) run_stats(stats_in, stats_schema, stats_strict, g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const backend::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
