#include "medalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "medalign/error.hpp"
#include "medalign/text.hpp"

namespace medalign::metrics {
namespace {

struct U32Hash {
  std::size_t operator()(std::u32string_view s) const noexcept { return std::hash<std::u32string_view>{}(s); }
};

using GramCounts = std::unordered_map<std::u32string_view, std::size_t, U32Hash>;

GramCounts count_grams(std::u32string_view s, std::size_t n) {
  GramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

// Sum over candidate grams of min(count, reference count).
std::size_t clipped_overlap(const GramCounts& cand, const GramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double bleu_n(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1 || n > 2) throw UsageError("bleu_n supports orders 1 and 2");
  const auto c = text::decode_utf8(candidate);
  const auto r = text::decode_utf8(reference);
  if (c.empty()) return 0.0;

  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto order = static_cast<std::size_t>(k);
    const std::size_t total = c.size() >= order ? c.size() - order + 1 : 0;
    const std::size_t matches = clipped_overlap(count_grams(c, order), count_grams(r, order));
    double p;
    if (k == 1) {
      p = static_cast<double>(matches) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matches + 1) / static_cast<double>(total + 1);
    }
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double bp =
      c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size())) : 1.0;
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (char32_t ca : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = ca == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
  const auto c = text::decode_utf8(candidate);
  const auto r = text::decode_utf8(reference);
  if (c.empty() || r.empty()) return 0.0;

  if (variant == RougeVariant::rl) {
    const auto l = static_cast<double>(lcs_length(c, r));
    return f_measure(l / static_cast<double>(c.size()), l / static_cast<double>(r.size()));
  }
  const std::size_t n = variant == RougeVariant::r1 ? 1 : 2;
  auto grams = [n](std::u32string_view s) {
    if (s.size() < n) return GramCounts{{s, 1}};
    return count_grams(s, n);
  };
  const auto cg = grams(c);
  const auto rg = grams(r);
  auto total = [](const GramCounts& g) {
    std::size_t t = 0;
    for (const auto& kv : g) t += kv.second;
    return t;
  };
  const auto overlap = static_cast<double>(clipped_overlap(cg, rg));
  return f_measure(overlap / static_cast<double>(total(cg)), overlap / static_cast<double>(total(rg)));
}

Prf ner_f1(const std::vector<EntitySet>& preds, const std::vector<EntitySet>& golds) {
  if (preds.size() != golds.size()) {
    throw DataError("ner_f1: " + std::to_string(preds.size()) + " predictions for " + std::to_string(golds.size()) +
                    " gold sets");
  }
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    n_pred += preds[i].size();
    n_gold += golds[i].size();
    for (const auto& e : preds[i]) tp += golds[i].count(e);
  }
  Prf out;
  out.precision = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  out.recall = n_gold ? static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  out.f1 = f_measure(out.precision, out.recall);
  return out;
}

double accuracy(const std::vector<std::optional<char>>& preds, const std::vector<char>& golds) {
  if (preds.size() != golds.size()) throw DataError("accuracy: prediction and gold counts differ");
  if (preds.empty()) throw DataError("accuracy: no instances");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && *preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace medalign::metrics
