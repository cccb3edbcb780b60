#include <gtest/gtest.h>

#include <fstream>

#include "medalign/corpus.hpp"
#include "medalign/random.hpp"
#include "support/common.hpp"

using namespace medalign;
using namespace medalign::corpus;
using testing_support::TempDir;

namespace {

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST(Ingest, ValidQaFile) {
  TempDir dir;
  write_lines(dir / "qa.jsonl", {R"({"id":"1","question":"q1","answer":"a1","source":"s"})",
                                 R"({"id":"2","question":"q2","answer":"a2","source":"s"})",
                                 R"({"id":"3","question":"q3","answer":"a3","source":"s"})"});
  auto res = ingest(dir / "qa.jsonl", Schema::qa);
  EXPECT_EQ(res.size(), 3u);
  EXPECT_TRUE(res.rejects.empty());
}

TEST(Ingest, MalformedLineCollectedUnlessStrict) {
  TempDir dir;
  write_lines(dir / "qa.jsonl", {R"({"id":"1","question":"q1","answer":"a1","source":"s"})",
                                 R"({"id":"2","question":"q2",)",
                                 R"({"id":"3","question":"q3","answer":"a3","source":"s"})",
                                 R"({"id":"4","question":"q4","answer":"a4","source":"s"})"});
  auto res = ingest(dir / "qa.jsonl", Schema::qa);
  EXPECT_EQ(res.size(), 3u);
  ASSERT_EQ(res.rejects.size(), 1u);
  EXPECT_EQ(res.rejects[0].line, 2u);
  EXPECT_THROW(ingest(dir / "qa.jsonl", Schema::qa, true), DataError);
}

TEST(Ingest, InvariantViolationsAreRejects) {
  TempDir dir;
  write_lines(dir / "p.jsonl", {R"({"id":"1","prompt":"p","accepted":"same","rejected":"same"})",
                                R"({"id":"2","prompt":"p","accepted":"a","rejected":"b"})",
                                R"({"id":"3","question":"","answer":"a","source":"s"})"});
  auto res = ingest(dir / "p.jsonl", Schema::preference);
  EXPECT_EQ(res.size(), 1u);
  EXPECT_EQ(res.rejects.size(), 2u);
}

TEST(Ingest, UnknownSchemaIsUsageError) { EXPECT_THROW(parse_schema("tweets"), UsageError); }

TEST(Ingest, RewardFixtureHas4000Records) {
  auto res = ingest(testing_support::fixture("reward.jsonl"), Schema::preference);
  EXPECT_EQ(res.size(), 4000u);
  EXPECT_TRUE(res.rejects.empty());
  CharTokenizer tok;
  EXPECT_EQ(dataset_stats(res, tok).instances, 4000u);
}

TEST(Dedup, Examples) {
  std::vector<Document> docs{{"1", "a", "s"}, {"2", "a", "s"}, {"3", "b", "s"}};
  auto out = deduplicate(docs);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].id, "1");
  EXPECT_EQ(out[1].text, "b");

  std::vector<Document> distinct{{"1", "a", "s"}, {"2", "b", "s"}};
  EXPECT_EQ(deduplicate(distinct).size(), 2u);

  std::vector<Document> ws{{"1", "x ", "s"}, {"2", "x", "s"}};
  EXPECT_EQ(deduplicate(ws).size(), 1u);

  // NFC: precomposed and decomposed e-acute are the same record
  std::vector<Document> nfc{{"1", "caf\xc3\xa9", "s"}, {"2", "cafe\xcc\x81", "s"}};
  EXPECT_EQ(deduplicate(nfc).size(), 1u);
}

TEST(Dedup, IdempotentAndNeverGrows) {
  Rng rng(5);
  const std::vector<std::string> pool{"a", "a ", " a", "b", "b\tc", "b c", "甲", "甲　"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PromptResponse> v;
    const auto n = rng.below(20);
    for (std::uint64_t i = 0; i < n; ++i) {
      v.push_back({pool[rng.below(pool.size())], pool[rng.below(pool.size())], Origin::qa});
    }
    auto once = deduplicate(v);
    EXPECT_LE(once.size(), v.size());
    EXPECT_EQ(deduplicate(once), once);
  }
}

TEST(Scrub, Examples) {
  EXPECT_EQ(scrub_pii("call 13812345678"), "call <PHONE>");
  EXPECT_EQ(scrub_pii("no personal data here"), "no personal data here");
  EXPECT_EQ(scrub_pii("身份证110101199003071234号"), "身份证<ID>号");
  EXPECT_EQ(scrub_pii("id 11010119900307123X end"), "id <ID> end");
  EXPECT_EQ(scrub_pii("mail me: a.b+c@example.co.uk"), "mail me: <EMAIL>");
  EXPECT_EQ(scrub_pii("座机010-12345678"), "座机<PHONE>");
  // embedded in a longer digit run: not a phone number
  EXPECT_EQ(scrub_pii("138123456789"), "138123456789");
  EXPECT_EQ(scrub_pii("12345678901"), "12345678901");
}

TEST(Scrub, IdempotentAndLengthBounded) {
  Rng rng(11);
  const std::vector<std::string> parts{"13812345678", "110101199003071234", "x@y.com", "010-1234567", "文本",
                                       " ", "1", "9", "a", "@", "-"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const auto n = rng.below(8);
    std::size_t matches_budget = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      s += parts[rng.below(parts.size())];
      ++matches_budget;
    }
    const auto once = scrub_pii(s);
    EXPECT_EQ(scrub_pii(once), once) << s;
    EXPECT_LE(once.size(), s.size() + matches_budget * 7) << s;
  }
}

TEST(SftPairs, QaAndDialogue) {
  std::vector<QAPair> qa{{"q", "问题", "回答", "s"}};
  // patient, doctor, patient, then the doctor reply
  DialogueCase d{"d1",
                 {{Speaker::patient, "我头疼"}, {Speaker::doctor, "多久了？"}, {Speaker::patient, "三天"},
                  {Speaker::doctor, "建议就诊"}}};
  DialogueCase short_one{"d2", {{Speaker::patient, "你好"}}};
  DialogueCase patient_last{"d3", {{Speaker::doctor, "你好"}, {Speaker::patient, "谢谢"}}};
  auto out = build_sft_pairs(qa, {d, short_one, patient_last});
  ASSERT_EQ(out.pairs.size(), 2u);
  EXPECT_EQ(out.pairs[0], (PromptResponse{"问题", "回答", Origin::qa}));
  EXPECT_EQ(out.pairs[1].prompt, "患者:我头疼\n医生:多久了？\n患者:三天");
  EXPECT_EQ(out.pairs[1].response, "建议就诊");
  EXPECT_EQ(out.pairs[1].origin, Origin::dialogue);
  ASSERT_EQ(out.skipped.size(), 2u);
  EXPECT_EQ(out.skipped[0].id, "d2");
  EXPECT_EQ(out.skipped[1].id, "d3");
}

TEST(SftPairs, CountAndHistoryOrderProperty) {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<QAPair> qa;
    std::vector<DialogueCase> dialogues;
    const auto nq = rng.below(5);
    for (std::uint64_t i = 0; i < nq; ++i) qa.push_back({std::to_string(i), "q" + std::to_string(i), "a", "s"});
    std::size_t doctor_final = 0;
    const auto nd = rng.below(6);
    for (std::uint64_t i = 0; i < nd; ++i) {
      DialogueCase d{"d" + std::to_string(i), {}};
      const auto turns = 1 + rng.below(6);
      for (std::uint64_t t = 0; t < turns; ++t) {
        d.turns.push_back({rng.below(2) ? Speaker::doctor : Speaker::patient, "turn" + std::to_string(t) + "x"});
      }
      if (d.turns.size() >= 2 && d.turns.back().speaker == Speaker::doctor) ++doctor_final;
      dialogues.push_back(d);
    }
    auto out = build_sft_pairs(qa, dialogues);
    ASSERT_EQ(out.pairs.size(), qa.size() + doctor_final);
    for (const auto& p : out.pairs) {
      if (p.origin != Origin::dialogue) continue;
      std::size_t last = 0;
      for (int t = 0;; ++t) {
        auto pos = p.prompt.find("turn" + std::to_string(t) + "x");
        if (pos == std::string::npos) break;
        EXPECT_GE(pos, last);
        last = pos;
      }
    }
  }
}

TEST(SafetyMerge, Examples) {
  std::vector<PromptResponse> sft;
  std::vector<PromptResponse> safety;
  for (int i = 0; i < 10; ++i) sft.push_back({"p" + std::to_string(i), "r", Origin::qa});
  for (int i = 0; i < 5; ++i) safety.push_back({"s" + std::to_string(i), "r", Origin::safety});
  auto merged = merge_with_safety(sft, safety);
  EXPECT_EQ(merged.size(), 15u);
  EXPECT_EQ(merged.back().origin, Origin::safety);

  safety[0] = sft[3];
  safety[0].origin = Origin::safety;
  EXPECT_EQ(merge_with_safety(sft, safety).size(), 14u);
  EXPECT_EQ(merge_with_safety(sft, {}), sft);
}

TEST(Stats, Examples) {
  CharTokenizer tok;
  EXPECT_EQ(dataset_stats(std::vector<Document>{}, tok), (DatasetStats{0, 0, 0}));
  std::vector<Document> docs{{"1", "abc", "s"}, {"2", "xyz", "s"}};
  auto s = dataset_stats(docs, tok);
  EXPECT_EQ(s.instances, 2u);
  EXPECT_EQ(s.tokens, 6u);
  EXPECT_EQ(s.bytes, 6u);
  std::vector<Document> cjk{{"1", "医生", "s"}};
  EXPECT_EQ(dataset_stats(cjk, tok), (DatasetStats{1, 2, 6}));
}

TEST(Json, RoundTrips) {
  DialogueCase d{"d", {{Speaker::patient, "a"}, {Speaker::doctor, "b"}}};
  auto back = dialogue_from_json(to_json(d));
  EXPECT_EQ(back.turns.size(), 2u);
  EXPECT_EQ(back.turns[1].speaker, Speaker::doctor);
  PromptResponse p{"x", "y", Origin::safety};
  EXPECT_EQ(pair_from_json(to_json(p)), p);
}
