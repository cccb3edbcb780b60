#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "medalign/jsonl.hpp"
#include "medalign/random.hpp"
#include "medalign/rsft.hpp"
#include "support/common.hpp"
#include "support/oracles.hpp"

using namespace medalign;
using namespace medalign::rsft;

namespace {

std::vector<corpus::PromptResponse> sft_rows(std::size_t n) {
  std::vector<corpus::PromptResponse> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"问题" + std::to_string(i), "答", corpus::Origin::qa});
  return out;
}

Candidate cand(std::size_t prompt, std::size_t k, double s) {
  Candidate c;
  c.prompt_id = prompt;
  c.candidate_index = k;
  c.prompt = "p" + std::to_string(prompt);
  c.text = "c" + std::to_string(prompt) + "-" + std::to_string(k);
  c.reward_score = s;
  return c;
}

}  // namespace

TEST(Sample, MatchesFisherYatesOracle) {
  auto rows = sft_rows(5);
  auto got = sample_prompts(rows, 2, 7);
  auto order = oracle::fisher_yates(5, 7);
  ASSERT_EQ(got.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(got[i].prompt_id, i);
    EXPECT_EQ(got[i].source_index, order[i]);
    EXPECT_EQ(got[i].prompt, rows[order[i]].prompt);
  }
  EXPECT_EQ(sample_prompts(rows, 5, 1).size(), 5u);
  EXPECT_TRUE(sample_prompts(rows, 0, 1).empty());
  EXPECT_THROW(sample_prompts(rows, 6, 1), DataError);
}

TEST(Sample, WithoutReplacementAndDeterministic) {
  auto rows = sft_rows(300);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = sample_prompts(rows, 120, seed);
    std::vector<std::size_t> idx;
    for (const auto& p : a) idx.push_back(p.source_index);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    auto b = sample_prompts(rows, 120, seed);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].source_index, b[i].source_index);
  }
}

TEST(Generate, CountsAndFailures) {
  auto prompts = sample_prompts(sft_rows(10), 10, 3);
  backend::MockBackend mock([](const backend::GenerationRequest& r) {
    if (r.prompt() == "问题4" && r.request_id.back() == '1') {
      throw backend::BackendError(backend::ErrorKind::server_error, "down", 503);
    }
    return r.prompt() + "/" + r.request_id;
  });
  SamplingConfig cfg;
  cfg.k_gen = 4;
  auto run = generate_candidates(mock, prompts, cfg, 4);
  EXPECT_EQ(run.candidates.size(), 39u);
  ASSERT_EQ(run.missing.size(), 1u);
  EXPECT_EQ(run.missing[0].failed, 1);
  EXPECT_EQ(prompts[run.missing[0].prompt_id].prompt, "问题4");
  std::size_t last_prompt = 0;
  for (const auto& c : run.candidates) {
    EXPECT_GE(c.prompt_id, last_prompt);
    last_prompt = c.prompt_id;
    EXPECT_FALSE(c.reward_score.has_value());
  }

  cfg.k_gen = 1;
  EXPECT_EQ(generate_candidates(mock, prompts, cfg, 2).candidates.size(), 10u);
  cfg.k_gen = 0;
  EXPECT_THROW(generate_candidates(mock, prompts, cfg, 2), UsageError);
}

TEST(Generate, CandidateRequestsAreDistinct) {
  SampledPrompt p{3, 9, "问"};
  SamplingConfig cfg;
  std::vector<std::string> hashes;
  for (int k = 0; k < 4; ++k) hashes.push_back(backend::request_hash(candidate_request(p, k, cfg)));
  std::sort(hashes.begin(), hashes.end());
  EXPECT_EQ(std::unique(hashes.begin(), hashes.end()), hashes.end());
  auto r = candidate_request(p, 0, cfg);
  EXPECT_DOUBLE_EQ(r.temperature, 0.8);
  EXPECT_DOUBLE_EQ(r.top_p, 0.95);
}

TEST(Score, FillsEveryCandidate) {
  reward::FeatureConfig fc;
  fc.hash_dim = 512;
  auto params = reward::RewardModelParams::zeros(fc);
  Rng rng(1);
  for (auto& w : params.weights) w = rng.normal();
  std::vector<Candidate> cs{cand(0, 0, 0), cand(0, 1, 0)};
  for (auto& c : cs) c.reward_score.reset();
  auto scored = score_candidates(params, cs);
  for (const auto& c : scored) {
    ASSERT_TRUE(c.reward_score.has_value());
    EXPECT_DOUBLE_EQ(*c.reward_score, reward::score(params, c.prompt, c.text));
  }
}

TEST(Select, Examples) {
  std::vector<Candidate> cs{cand(0, 0, 0.1), cand(0, 1, 0.9), cand(0, 2, 0.5), cand(1, 0, 0.3), cand(1, 1, 0.3)};
  auto best = select(cs, SelectionMode::per_prompt_best, 0);
  ASSERT_EQ(best.size(), 2u);
  EXPECT_EQ(best[0].candidate_index, 1u);
  EXPECT_EQ(best[1].candidate_index, 0u);  // tie: lowest index

  auto top = select(cs, SelectionMode::global_top_k, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_DOUBLE_EQ(*top[0].reward_score, 0.9);
  EXPECT_DOUBLE_EQ(*top[1].reward_score, 0.5);
  EXPECT_EQ(top[2].prompt_id, 1u);
  EXPECT_EQ(top[2].candidate_index, 0u);  // stable among the 0.3s
  EXPECT_EQ(select(cs, SelectionMode::global_top_k, 100).size(), cs.size());

  EXPECT_THROW(select(cs, SelectionMode::global_top_k, 0), UsageError);
  cs[2].reward_score.reset();
  EXPECT_THROW(select(cs, SelectionMode::per_prompt_best, 0), DataError);
  EXPECT_TRUE(select({}, SelectionMode::per_prompt_best, 0).empty());
}

TEST(Select, AgreesWithBruteForce) {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Candidate> cs;
    const auto prompts = 1 + rng.below(20);
    for (std::size_t p = 0; p < prompts; ++p) {
      for (std::size_t k = 0; k < 4; ++k) cs.push_back(cand(p, k, static_cast<double>(rng.below(5))));
    }
    auto best = select(cs, SelectionMode::per_prompt_best, 0);
    ASSERT_EQ(best.size(), prompts);
    for (std::size_t p = 0; p < prompts; ++p) {
      double max_s = -1;
      std::size_t arg = 0;
      for (const auto& c : cs) {
        if (c.prompt_id == p && *c.reward_score > max_s) {
          max_s = *c.reward_score;
          arg = c.candidate_index;
        }
      }
      EXPECT_EQ(best[p].candidate_index, arg);
    }
    const int k = 1 + static_cast<int>(rng.below(cs.size()));
    auto top = select(cs, SelectionMode::global_top_k, k);
    std::vector<double> all;
    for (const auto& c : cs) all.push_back(*c.reward_score);
    std::sort(all.rbegin(), all.rend());
    for (int i = 0; i < k; ++i) EXPECT_EQ(*top[i].reward_score, all[i]);
  }
}

TEST(Emit, FilesAndPreset) {
  testing_support::TempDir dir;
  std::vector<Candidate> sel{cand(0, 1, 0.9), cand(1, 0, 0.3)};
  EmitInfo info;
  info.seed = 5;
  info.prompts = 2;
  info.candidates = 8;
  info.reward_params_checksum = "abc";
  auto files = emit_finetune_dataset(sel, RsftTrainPreset{}, info, dir / "ft");
  auto lines = read_text(files.selected);
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 2);
  auto manifest = json::parse(read_text(files.manifest));
  EXPECT_EQ(manifest["counts"]["selected"], 2);
  EXPECT_EQ(manifest["reward_params_checksum"], "abc");
  EXPECT_EQ(read_text(files.config),
            "optimizer=adamw\nbeta1=0.9\nbeta2=0.95\nepsilon=1e-05\nlearning_rate=1e-05\nweight_decay=0.1\n"
            "iterations=400\nbatch_size=64\n");
  auto back = parse_preset(read_text(files.config));
  EXPECT_EQ(render_preset(back), render_preset(RsftTrainPreset{}));
  EXPECT_THROW(emit_finetune_dataset({}, RsftTrainPreset{}, info, dir / "empty"), DataError);
  EXPECT_THROW(parse_preset("beta1"), DataError);
}

TEST(Emit, ChecksumTracksParams) {
  reward::FeatureConfig fc;
  fc.hash_dim = 64;
  auto a = reward::RewardModelParams::zeros(fc);
  auto b = a;
  b.weights[0] = 1.0;
  EXPECT_NE(reward::params_checksum(a), reward::params_checksum(b));
}

TEST(Json, CandidateRoundTrip) {
  auto c = cand(3, 2, -0.25);
  auto back = candidate_from_json(to_json(c));
  EXPECT_EQ(back.prompt_id, 3u);
  EXPECT_EQ(back.candidate_index, 2u);
  EXPECT_EQ(back.text, c.text);
  EXPECT_EQ(back.reward_score, c.reward_score);
  auto p = sampled_prompt_from_json(to_json(SampledPrompt{1, 2, "x"}));
  EXPECT_EQ(p.source_index, 2u);
  EXPECT_EQ(parse_selection_mode(to_string(SelectionMode::global_top_k)), SelectionMode::global_top_k);
  EXPECT_THROW(parse_selection_mode("best"), UsageError);
}
