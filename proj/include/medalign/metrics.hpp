#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

// Text-generation and extraction metrics. Scores live in [0, 1]; the x100
// scaling happens only when reports are rendered.
namespace medalign::metrics {

// Character-level BLEU with max order n (1 or 2). Order-1 precision is the
// plain clipped precision; orders >= 2 use (matches + 1) / (total + 1).
// Brevity penalty exp(1 - |r|/|c|) when |c| < |r|. Empty candidate -> 0.
double bleu_n(std::string_view candidate, std::string_view reference, int n);

enum class RougeVariant { r1, r2, rl };

// Character-level ROUGE F-measure (precision and recall weighted equally).
// R-1/R-2 use clipped n-gram overlap; a text shorter than n contributes
// itself as its only n-gram. R-L uses the longest common subsequence.
// Either side empty -> 0.
double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant);

std::size_t lcs_length(std::u32string_view a, std::u32string_view b);

struct Entity {
  std::string type;
  std::string mention;

  auto operator<=>(const Entity&) const = default;
};

using EntitySet = std::set<Entity>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged exact (type, mention) match; zero denominators give 0.
// Throws DataError on length mismatch.
Prf ner_f1(const std::vector<EntitySet>& preds, const std::vector<EntitySet>& golds);

// Exact-match fraction; a missing prediction is wrong. Throws DataError on
// length mismatch or empty input.
double accuracy(const std::vector<std::optional<char>>& preds, const std::vector<char>& golds);

}  // namespace medalign::metrics
