#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "medalign/jsonl.hpp"

namespace medalign::evalkit {

struct HumanScoreRecord {
  std::string annotator;
  std::string item;
  std::string model;
  int fluency = 0;
  int completeness = 0;
  int precision = 0;
};

struct RejectedRecord {
  std::size_t line = 0;  // 0 when not read from a file
  std::string reason;
};

struct HumanScoreFile {
  std::vector<HumanScoreRecord> records;
  std::vector<RejectedRecord> rejected;
};

// CSV with header annotator,item,model,fluency,completeness,precision.
HumanScoreFile read_human_scores(const std::filesystem::path& path);

struct AspectStats {
  double mean = 0.0;
  // Mean absolute pairwise difference between annotators on the same item,
  // averaged over items with at least two annotators; empty when none.
  std::optional<double> agreement_mad;
};

struct ModelHumanScores {
  AspectStats fluency;
  AspectStats completeness;
  AspectStats precision;
  std::size_t records = 0;
  std::size_t items = 0;
};

struct HumanAggregate {
  std::map<std::string, ModelHumanScores> models;
  std::vector<RejectedRecord> rejected;
};

// Records with any score outside [1, 3] are rejected and listed.
HumanAggregate aggregate_human_scores(const std::vector<HumanScoreRecord>& records);

json to_json(const HumanAggregate& agg);
// Flu / Comp / Pre table with two decimals.
std::string render_table(const HumanAggregate& agg);

}  // namespace medalign::evalkit
