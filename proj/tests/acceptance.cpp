// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "medalign/bias.hpp"
#include "medalign/corpus.hpp"
#include "medalign/evalkit.hpp"
#include "medalign/metrics.hpp"
#include "medalign/pack.hpp"
#include "medalign/random.hpp"
#include "medalign/reward.hpp"
#include "medalign/reward_train.hpp"
#include "medalign/rsft.hpp"
#include "support/common.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace medalign;
using testing_support::fixture;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void run(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (out.ok && limit_s > 0 && secs >= limit_s) {
    out.ok = false;
    out.detail = "took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s) + " s";
  }
  if (!out.ok) ++failures;
  std::printf("%s [%d] %s (%.2f s)%s%s\n", out.ok ? "PASS" : "FAIL", id, name, secs, out.detail.empty() ? "" : ": ",
              out.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// 1 ---------------------------------------------------------------------

Outcome augmentation() {
  Outcome o;
  auto lines = read_jsonl_values(fixture("reward.jsonl"));
  o.check(lines.size() == 4000, "fixture has " + std::to_string(lines.size()) + " instances");
  std::size_t total = 0;
  for (const auto& j : lines) {
    const auto raw = corpus::preference_from_json(j);
    const auto mids = j.at("intermediates").get<std::vector<std::string>>();
    const auto pairs = reward::adjacent_pairs(reward::augment_ranking(raw, mids));
    total += pairs.size();
    const std::vector<std::string> ranked{raw.accepted, mids.at(0), mids.at(1), raw.rejected};
    o.check(pairs.size() == 3, raw.id + ": " + std::to_string(pairs.size()) + " pairs");
    for (std::size_t i = 0; i < pairs.size() && i < 3; ++i) {
      o.check(pairs[i].chosen == ranked[i] && pairs[i].rejected == ranked[i + 1], raw.id + ": pair order");
      o.check(pairs[i].prompt == raw.prompt, raw.id + ": prompt");
    }
  }
  o.check(total == 12000, "total pairs " + std::to_string(total));
  o.detail = o.ok ? std::to_string(total) + " pairs" : o.detail;
  return o;
}

// 2 ---------------------------------------------------------------------

Outcome reward_correctness() {
  Outcome o;
  reward::FeatureConfig fc;
  auto params = reward::RewardModelParams::zeros(fc);
  Rng rng(2024);
  for (auto& w : params.weights) w = 0.1 * rng.normal();
  params.bias = 0.3;

  // random prompt / response text, not the separable set
  std::vector<reward::PreferencePair> random_pairs;
  for (int i = 0; i < 100; ++i) {
    random_pairs.push_back({"问" + synthetic::filler(rng, 1 + rng.below(20)), synthetic::filler(rng, 1 + rng.below(40)),
                            synthetic::filler(rng, 1 + rng.below(40)), 1});
  }
  double worst = 0.0;
  for (const auto& p : random_pairs) worst = std::max(worst, reward::grad_check(params, p, 1e-5).max_relative_error);
  o.check(worst < 1e-6, "grad_check max relative error " + fmt(worst));

  auto cfg = reward::RewardTrainConfig::desk();
  cfg.epochs = 2;
  cfg.batch_size = 8;
  auto pairs = synthetic::separable_pairs(2000, 77);
  auto result = reward::train_reward(pairs, reward::SplitSpec::proportional(pairs.size()), cfg);
  o.check(result.val_accuracy >= 0.95, "validation accuracy " + fmt(result.val_accuracy));
  if (o.ok) o.detail = "grad err " + fmt(worst) + ", val acc " + fmt(result.val_accuracy);
  return o;
}

// 3 ---------------------------------------------------------------------

Outcome binary_vs_adjacent() {
  Outcome o;
  int wins = 0;
  std::ostringstream log;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto instances = synthetic::tiered_instances(500, 1000 + trial);
    auto order = shuffled_indices(instances.size(), trial);
    std::vector<reward::PreferencePair> bin_train, bin_val, adj_train, adj_val;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& inst = instances[order[k]];
      const bool val = k < 100;
      (val ? bin_val : bin_train).push_back(reward::binary_pair(inst));
      for (auto& p : reward::adjacent_pairs(inst)) (val ? adj_val : adj_train).push_back(std::move(p));
    }
    auto cfg = reward::RewardTrainConfig::desk();
    cfg.features.hash_dim = 1 << 14;
    cfg.seed = trial;
    const auto bin = reward::train_reward(reward::SplitPairs{bin_train, bin_val, {}}, cfg);
    const auto adj = reward::train_reward(reward::SplitPairs{adj_train, adj_val, {}}, cfg);
    if (bin.val_accuracy >= adj.val_accuracy) ++wins;
    log << " " << fmt(bin.val_accuracy) << "/" << fmt(adj.val_accuracy);
  }
  o.check(wins >= 9, "binary won " + std::to_string(wins) + "/10:" + log.str());
  if (o.ok) o.detail = std::to_string(wins) + "/10 trials, binary/adjacent:" + log.str();
  return o;
}

// 4 ---------------------------------------------------------------------

std::map<std::string, std::string> rsft_end_to_end(const std::filesystem::path& log, const std::filesystem::path& out,
                                                   const std::vector<corpus::PromptResponse>& sft,
                                                   const reward::RewardModelParams& params) {
  rsft::SamplingConfig cfg;
  cfg.n_prompts = 200;
  cfg.k_gen = 4;
  cfg.seed = 11;
  backend::ReplayBackend replay(log);
  auto prompts = rsft::sample_prompts(sft, cfg.n_prompts, cfg.seed);
  auto run = rsft::generate_candidates(replay, prompts, cfg, 4);
  auto scored = rsft::score_candidates(params, run.candidates);
  auto selected = rsft::select(scored, rsft::SelectionMode::per_prompt_best, 0);
  rsft::EmitInfo info;
  info.seed = cfg.seed;
  info.prompts = prompts.size();
  info.candidates = scored.size();
  info.missing = run.missing.size();
  info.reward_params_checksum = reward::params_checksum(params);
  auto files = rsft::emit_finetune_dataset(selected, rsft::RsftTrainPreset{}, info, out);
  std::vector<json> cand_lines;
  for (const auto& c : scored) {
    auto j = rsft::to_json(c);
    j.erase("latency_ms");
    cand_lines.push_back(j);
  }
  write_jsonl(out / "scored.jsonl", cand_lines);
  return {{"selected", read_text(files.selected)},
          {"config", read_text(files.config)},
          {"manifest", read_text(files.manifest)},
          {"scored", read_text(out / "scored.jsonl")}};
}

Outcome rsft_selection() {
  Outcome o;
  Rng rng(404);
  std::vector<rsft::Candidate> cands;
  for (std::size_t p = 0; p < 200; ++p) {
    for (std::size_t k = 0; k < 4; ++k) {
      rsft::Candidate c;
      c.prompt_id = p;
      c.candidate_index = k;
      c.text = "c" + std::to_string(p) + "-" + std::to_string(k);
      // coarse grid so ties happen
      c.reward_score = static_cast<double>(rng.below(9)) / 4.0;
      cands.push_back(c);
    }
  }
  auto best = rsft::select(cands, rsft::SelectionMode::per_prompt_best, 0);
  o.check(best.size() == 200, "per_prompt_best size " + std::to_string(best.size()));
  for (std::size_t p = 0; p < 200 && p < best.size(); ++p) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      if (*cands[p * 4 + k].reward_score > *cands[p * 4 + arg].reward_score) arg = k;
    }
    o.check(best[p].prompt_id == p && best[p].candidate_index == arg, "argmax mismatch at prompt " + std::to_string(p));
  }
  auto top = rsft::select(cands, rsft::SelectionMode::global_top_k, 50);
  auto sorted = cands;
  std::sort(sorted.begin(), sorted.end(), [](const rsft::Candidate& a, const rsft::Candidate& b) {
    if (*a.reward_score != *b.reward_score) return *a.reward_score > *b.reward_score;
    return std::make_pair(a.prompt_id, a.candidate_index) < std::make_pair(b.prompt_id, b.candidate_index);
  });
  o.check(top.size() == 50, "top_k size " + std::to_string(top.size()));
  for (std::size_t i = 0; i < 50 && i < top.size(); ++i) {
    o.check(top[i].prompt_id == sorted[i].prompt_id && top[i].candidate_index == sorted[i].candidate_index,
            "top-50 mismatch at rank " + std::to_string(i));
  }

  // record once with a mock, then replay twice
  testing_support::TempDir dir;
  std::vector<corpus::PromptResponse> sft;
  for (int i = 0; i < 500; ++i) sft.push_back({"问题" + std::to_string(i), "答", corpus::Origin::qa});
  {
    auto inner = std::make_shared<backend::MockBackend>(
        [](const backend::GenerationRequest& r) { return "回答" + backend::request_hash(r).substr(0, 10); });
    backend::RecordingBackend rec(inner, dir / "log.jsonl");
    rsft::SamplingConfig cfg;
    cfg.n_prompts = 200;
    cfg.seed = 11;
    rsft::generate_candidates(rec, rsft::sample_prompts(sft, 200, 11), cfg, 4);
  }
  reward::FeatureConfig fc;
  fc.hash_dim = 1 << 12;
  auto params = reward::RewardModelParams::zeros(fc);
  Rng wrng(5);
  for (auto& w : params.weights) w = wrng.normal();
  auto a = rsft_end_to_end(dir / "log.jsonl", dir / "a", sft, params);
  auto b = rsft_end_to_end(dir / "log.jsonl", dir / "b", sft, params);
  for (const auto& [name, content] : a) o.check(content == b[name], name + " differs between replay runs");
  o.check(std::count(a["scored"].begin(), a["scored"].end(), '\n') == 800, "expected 800 candidates");
  if (o.ok) o.detail = "argmax, top-50 and replayed outputs all match";
  return o;
}

// 5 ---------------------------------------------------------------------

std::string random_text(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> alphabet{"a", "b", "c", "d", "头", "痛", "发", "热", "，"};
  std::string s;
  const auto n = rng.below(max_len + 1);
  for (std::uint64_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

Outcome metric_oracles() {
  Outcome o;
  Rng rng(55);
  double worst = 0.0;
  using metrics::RougeVariant;
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_text(rng, 50);
    const auto r = random_text(rng, 50);
    const double diffs[] = {
        std::abs(metrics::bleu_n(c, r, 1) - oracle::bleu(c, r, 1)),
        std::abs(metrics::bleu_n(c, r, 2) - oracle::bleu(c, r, 2)),
        std::abs(metrics::rouge(c, r, RougeVariant::r1) - oracle::rouge(c, r, 1)),
        std::abs(metrics::rouge(c, r, RougeVariant::r2) - oracle::rouge(c, r, 2)),
        std::abs(metrics::rouge(c, r, RougeVariant::rl) - oracle::rouge(c, r, 0)),
    };
    for (double d : diffs) worst = std::max(worst, d);

    if (!c.empty()) {
      o.check(metrics::bleu_n(c, c, 1) == 1.0 && metrics::bleu_n(c, c, 2) == 1.0, "BLEU identity != 1 for " + c);
      for (auto v : {RougeVariant::r1, RougeVariant::r2, RougeVariant::rl}) {
        o.check(metrics::rouge(c, c, v) == 1.0, "ROUGE identity != 1 for " + c);
      }
    }
  }
  o.check(worst <= 1e-9, "max deviation from oracle " + fmt(worst));

  const std::vector<std::string> types{"疾病", "药物", "症状", "检查"};
  const std::vector<std::string> mentions{"感冒", "发热", "头痛", "布洛芬", "咳嗽", "血常规", "肺炎"};
  std::vector<metrics::EntitySet> preds, golds;
  std::vector<std::set<oracle::Ent>> opreds, ogolds;
  for (int i = 0; i < 500; ++i) {
    metrics::EntitySet p, g;
    std::set<oracle::Ent> op, og;
    for (auto n = rng.below(5); n > 0; --n) {
      metrics::Entity e{types[rng.below(types.size())], mentions[rng.below(mentions.size())]};
      p.insert(e);
      op.insert({e.type, e.mention});
    }
    for (auto n = rng.below(5); n > 0; --n) {
      metrics::Entity e{types[rng.below(types.size())], mentions[rng.below(mentions.size())]};
      g.insert(e);
      og.insert({e.type, e.mention});
    }
    preds.push_back(p);
    golds.push_back(g);
    opreds.push_back(op);
    ogolds.push_back(og);
  }
  const auto got = metrics::ner_f1(preds, golds);
  const auto want = oracle::ner(opreds, ogolds);
  o.check(got.precision == want.p && got.recall == want.r && got.f1 == want.f, "ner_f1 differs from set oracle");
  if (o.ok) o.detail = "max deviation " + fmt(worst) + ", NER F1 " + fmt(got.f1);
  return o;
}

// 6 ---------------------------------------------------------------------

Outcome eval_protocol() {
  Outcome o;
  evalkit::TaskSpec spec;
  spec.task = evalkit::TaskKind::open_qa;
  auto data = evalkit::load_dataset(fixture("eval/open_qa.jsonl"), spec.task);

  // output depends on the run seed, so runs score differently
  std::atomic<int> calls{0};
  backend::MockBackend varying([&](const backend::GenerationRequest& r) {
    ++calls;
    const auto keep = 1 + *r.seed % 7;
    return std::string("根据描述").substr(0, 3 * std::min<std::uint64_t>(keep, 4));
  });
  evalkit::EvalOptions opt;
  auto rep = evalkit::run_eval(varying, spec, data, opt);
  o.check(opt.runs == 5, "default runs " + std::to_string(opt.runs));
  o.check(rep.per_run.size() == 5, "runs performed " + std::to_string(rep.per_run.size()));
  o.check(calls.load() == static_cast<int>(5 * data.size()), "backend calls " + std::to_string(calls.load()));
  for (std::size_t m = 0; m < rep.mean.size(); ++m) {
    double s = 0.0;
    for (const auto& run : rep.per_run) s += run[m];
    o.check(std::abs(rep.mean[m] - s / 5.0) < 1e-15, "mean is not the arithmetic mean of the runs");
  }

  auto score_with_gold = [&](evalkit::TaskKind task, const char* data_file, const char* ex_file) {
    evalkit::TaskSpec s;
    s.task = task;
    s.exemplars = evalkit::load_dataset(fixture(ex_file), task);
    s.shots = 3;
    auto d = evalkit::load_dataset(fixture(data_file), task);
    auto mock = evalkit::make_gold_echo_backend(s, d, opt);
    return evalkit::run_eval(*mock, s, d, opt);
  };
  auto mc = score_with_gold(evalkit::TaskKind::mc_qa, "eval/mc_qa.jsonl", "eval/mc_qa_exemplars.jsonl");
  auto qa = score_with_gold(evalkit::TaskKind::open_qa, "eval/open_qa.jsonl", "eval/open_qa_exemplars.jsonl");
  char mc_s[32], b1_s[32];
  std::snprintf(mc_s, sizeof mc_s, "%.2f", mc.mean[0] * 100.0);
  std::snprintf(b1_s, sizeof b1_s, "%.2f", qa.mean[0] * 100.0);
  o.check(std::string(mc_s) == "100.00", std::string("mc_qa accuracy ") + mc_s);
  o.check(qa.metric_names[0] == "B-1" && std::string(b1_s) == "100.00", std::string("open_qa B-1 ") + b1_s);
  if (o.ok) o.detail = std::string("5 runs; gold echo mc_qa Acc ") + mc_s + ", open_qa B-1 " + b1_s;
  return o;
}

// 7 ---------------------------------------------------------------------

Outcome packing() {
  Outcome o;
  CharTokenizer tok;
  pack::PackConfig cfg;
  cfg.max_len = 4096;
  Rng rng(7);
  static const std::vector<std::string> alphabet{"a", "z", "医", "生", "。", " ", "😀", "\n"};
  auto text = [&](std::size_t max_len) {
    std::string s;
    const auto n = 1 + rng.below(max_len);
    for (std::uint64_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
  };
  std::vector<corpus::PromptResponse> pairs;
  for (int i = 0; i < 10000; ++i) {
    // a few long ones so some pairs are skipped
    const std::size_t cap = rng.below(100) == 0 ? 3000 : 400;
    pairs.push_back({text(cap), text(cap), corpus::Origin::qa});
  }
  auto res = pack::pack_pairs(pairs, tok, cfg);
  std::vector<bool> skipped(pairs.size(), false);
  for (const auto& s : res.skipped) skipped[s.pair_index] = true;
  std::size_t expected = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!skipped[i]) expected += tok.count(pairs[i].prompt) + tok.count(pairs[i].response) + 1;
  }
  std::size_t got = 0;
  std::size_t recovered = 0;
  for (const auto& seq : res.sequences) {
    o.check(seq.token_ids.size() <= 4096, "sequence of " + std::to_string(seq.token_ids.size()) + " tokens");
    got += seq.token_ids.size();
    for (const auto& u : pack::unpack(seq, tok)) {
      ++recovered;
      o.check(u.prompt == pairs[u.pair_index].prompt && u.response == pairs[u.pair_index].response,
              "round trip failed for pair " + std::to_string(u.pair_index));
    }
  }
  o.check(got == expected, "tokens " + std::to_string(got) + " vs " + std::to_string(expected));
  o.check(recovered + res.skipped.size() == pairs.size(), "recovered " + std::to_string(recovered));
  if (o.ok) {
    o.detail = std::to_string(res.sequences.size()) + " sequences, " + std::to_string(res.skipped.size()) +
               " skipped, " + std::to_string(got) + " tokens";
  }
  return o;
}

// 8 ---------------------------------------------------------------------

Outcome bias_scales() {
  Outcome o;
  std::ostringstream log;
  for (const char* file : {"cami_fixture.json", "mica_fixture.json"}) {
    const auto scale = bias::load_scale(fixture(file));
    const int L = static_cast<int>(scale.size());
    auto forward = scale;
    for (auto& st : forward.statements) st.reverse = false;

    const auto strongest = bias::run_scale(*bias::make_fixed_answer_backend(forward, L), forward);
    o.check(strongest.average == static_cast<double>(L),
            scale.name + " strongest agreement average " + fmt(strongest.average));

    // the fixtures carry equal numbers of forward and reversed items, so a
    // constant neutral answer lands on (1 + L) / 2 for odd and even L
    const auto neutral = bias::run_scale(*bias::make_fixed_answer_backend(scale, bias::neutral_level(L)), scale);
    o.check(neutral.average == (1.0 + L) / 2.0, scale.name + " neutral average " + fmt(neutral.average));

    for (int level = 1; level <= L; ++level) {
      for (const bias::ScaleDef* s : {&scale, static_cast<const bias::ScaleDef*>(&forward)}) {
        const auto r = bias::run_scale(*bias::make_fixed_answer_backend(*s, level), *s);
        o.check(r.average >= 1.0 && r.average <= L, scale.name + " average out of range: " + fmt(r.average));
        o.check(r.parse_rate == 1.0, scale.name + " parse rate " + fmt(r.parse_rate));
      }
    }
    log << " " << scale.name << " strongest " << fmt(strongest.average) << " neutral " << fmt(neutral.average);
  }
  if (o.ok) o.detail = log.str().substr(1);
  return o;
}

// 9 ---------------------------------------------------------------------

Outcome rsft_preset() {
  Outcome o;
  testing_support::TempDir dir;
  rsft::Candidate c;
  c.prompt = "p";
  c.text = "r";
  c.reward_score = 1.0;
  auto files = rsft::emit_finetune_dataset({c}, rsft::RsftTrainPreset{}, rsft::EmitInfo{}, dir / "ft");
  const auto text = read_text(files.config);
  const std::string expected =
      "optimizer=adamw\nbeta1=0.9\nbeta2=0.95\nepsilon=1e-05\nlearning_rate=1e-05\nweight_decay=0.1\n"
      "iterations=400\nbatch_size=64\n";
  o.check(text == expected, "rsft_config:\n" + text);
  const auto p = rsft::parse_preset(text);
  o.check(p.iterations == 400 && p.batch_size == 64, "iterations/batch");
  o.check(p.beta1 == 0.9 && p.beta2 == 0.95, "betas");
  o.check(p.epsilon == 1e-5 && p.learning_rate == 1e-5 && p.weight_decay == 0.1, "epsilon/lr/weight decay");
  if (o.ok) o.detail = "iterations=400 batch=64 betas=(0.9,0.95) eps=1e-5 lr=1e-5 wd=0.1";
  return o;
}

}  // namespace

int main() {
  run(1, "preference augmentation: 4000 instances -> 12000 ordered adjacent pairs", 5, augmentation);
  run(2, "reward model: gradient check and separable-set accuracy", 60, reward_correctness);
  run(3, "binary task at least as accurate as adjacent pairs in >= 9/10 trials", 120, binary_vs_adjacent);
  run(4, "RSFT selection oracle and replay determinism", 10, rsft_selection);
  run(5, "BLEU/ROUGE/NER against brute-force oracles", 30, metric_oracles);
  run(6, "evaluation protocol: 5 runs, arithmetic mean, gold echo 100.00", 0, eval_protocol);
  run(7, "packing 10000 pairs at max_len 4096", 30, packing);
  run(8, "bias scales: strongest, neutral and range", 5, bias_scales);
  run(9, "emitted RSFT config matches the fine-tune preset", 0, rsft_preset);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
