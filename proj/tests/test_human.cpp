#include <gtest/gtest.h>

#include <fstream>

#include "medalign/human.hpp"
#include "support/common.hpp"

using namespace medalign;
using namespace medalign::evalkit;

TEST(Human, AllThrees) {
  std::vector<HumanScoreRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({"a" + std::to_string(i % 2), "it" + std::to_string(i / 2), "M", 3, 3, 3});
  auto agg = aggregate_human_scores(recs);
  const auto& m = agg.models.at("M");
  EXPECT_EQ(m.fluency.mean, 3.0);
  EXPECT_EQ(m.precision.mean, 3.0);
  EXPECT_EQ(m.records, 10u);
  EXPECT_EQ(m.items, 5u);
  ASSERT_TRUE(m.fluency.agreement_mad.has_value());
  EXPECT_EQ(*m.fluency.agreement_mad, 0.0);
}

TEST(Human, TwoAnnotatorsDisagree) {
  auto agg = aggregate_human_scores({{"a", "x", "M", 2, 1, 3}, {"b", "x", "M", 3, 1, 3}});
  const auto& m = agg.models.at("M");
  EXPECT_EQ(m.fluency.mean, 2.5);
  EXPECT_EQ(*m.fluency.agreement_mad, 1.0);
  EXPECT_EQ(*m.completeness.agreement_mad, 0.0);
  auto single = aggregate_human_scores({{"a", "x", "M", 2, 2, 2}});
  EXPECT_FALSE(single.models.at("M").fluency.agreement_mad.has_value());
}

TEST(Human, OutOfRangeRejected) {
  auto agg = aggregate_human_scores({{"a", "x", "M", 4, 1, 1}, {"a", "y", "M", 1, 0, 1}, {"a", "z", "M", 1, 1, 1}});
  EXPECT_EQ(agg.rejected.size(), 2u);
  EXPECT_EQ(agg.models.at("M").records, 1u);
}

TEST(Human, CsvReadingAndRejects) {
  testing_support::TempDir dir;
  {
    std::ofstream out(dir / "s.csv");
    out << "annotator,item,model,fluency,completeness,precision\n"
        << "a,1,M,3,2,1\r\n"
        << "a,2,M,x,2,1\n"
        << "a,3,M,3,2\n"
        << "\n"
        << "b,1,M,1,2,3\n";
  }
  auto f = read_human_scores(dir / "s.csv");
  EXPECT_EQ(f.records.size(), 2u);
  ASSERT_EQ(f.rejected.size(), 2u);
  EXPECT_EQ(f.rejected[0].line, 3u);
  EXPECT_EQ(f.rejected[1].line, 4u);
  EXPECT_THROW(read_human_scores(dir / "missing.csv"), DataError);
}

TEST(Human, FixtureMeans) {
  auto f = read_human_scores(testing_support::fixture("human_scores.csv"));
  EXPECT_TRUE(f.rejected.empty());
  auto agg = aggregate_human_scores(f.records);
  struct Row {
    const char* model;
    double flu, comp, pre;
  };
  for (const auto& r : {Row{"model-a", 2.17, 2.02, 2.01}, Row{"model-b", 2.30, 2.10, 2.13},
                        Row{"model-c", 2.27, 2.17, 2.22}, Row{"model-d", 2.57, 2.45, 2.57}}) {
    const auto& m = agg.models.at(r.model);
    EXPECT_NEAR(m.fluency.mean, r.flu, 1e-12) << r.model;
    EXPECT_NEAR(m.completeness.mean, r.comp, 1e-12) << r.model;
    EXPECT_NEAR(m.precision.mean, r.pre, 1e-12) << r.model;
    EXPECT_EQ(m.items, 50u);
  }
  auto table = render_table(agg);
  EXPECT_NE(table.find("2.57"), std::string::npos);
  EXPECT_EQ(to_json(agg)["models"].size(), 4u);
}
