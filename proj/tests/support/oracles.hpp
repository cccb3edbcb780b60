#pragma once

// Deliberately naive reference implementations. They share no code with the
// library: std::map n-gram tables, a full quadratic LCS table, set
// arithmetic, and a hand-rolled UTF-8 decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline std::u32string utf8_to_u32(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto b = static_cast<unsigned char>(s[i]);
    int len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : 4;
    char32_t cp = len == 1 ? b : len == 2 ? (b & 0x1F) : len == 3 ? (b & 0x0F) : (b & 0x07);
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline std::string u32_to_utf8(const std::u32string& s) {
  std::string out;
  for (char32_t c : s) {
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else if (c < 0x800) {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
      out += static_cast<char>(0xE0 | (c >> 12));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (c >> 18));
      out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

inline std::map<std::u32string, int> ngrams(const std::u32string& s, std::size_t n) {
  std::map<std::u32string, int> m;
  for (std::size_t i = 0; i + n <= s.size(); ++i) m[s.substr(i, n)] += 1;
  return m;
}

inline int clipped(const std::map<std::u32string, int>& cand, const std::map<std::u32string, int>& ref) {
  int m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

inline int total(const std::map<std::u32string, int>& m) {
  int t = 0;
  for (const auto& kv : m) t += kv.second;
  return t;
}

// Unigram precision plain; higher orders (m+1)/(t+1); brevity penalty when
// the candidate is shorter.
inline double bleu(const std::string& cand, const std::string& ref, int n) {
  const auto c = utf8_to_u32(cand);
  const auto r = utf8_to_u32(ref);
  if (c.empty()) return 0.0;
  double prod = 1.0;
  for (int k = 1; k <= n; ++k) {
    const auto cg = ngrams(c, static_cast<std::size_t>(k));
    const auto rg = ngrams(r, static_cast<std::size_t>(k));
    const double m = clipped(cg, rg);
    const double t = total(cg);
    const double p = k == 1 ? m / t : (m + 1.0) / (t + 1.0);
    if (p == 0.0) return 0.0;
    prod *= p;
  }
  const double bp = c.size() < r.size() ? std::exp(1.0 - double(r.size()) / double(c.size())) : 1.0;
  return bp * std::pow(prod, 1.0 / n);
}

inline std::size_t lcs(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

// variant: 1, 2, or 0 for L. A text shorter than n counts as one gram.
inline double rouge(const std::string& cand, const std::string& ref, int variant) {
  const auto c = utf8_to_u32(cand);
  const auto r = utf8_to_u32(ref);
  if (c.empty() || r.empty()) return 0.0;
  if (variant == 0) {
    const double l = double(lcs(c, r));
    return f1(l / double(c.size()), l / double(r.size()));
  }
  const auto n = static_cast<std::size_t>(variant);
  auto grams = [n](const std::u32string& s) {
    if (s.size() < n) return std::map<std::u32string, int>{{s, 1}};
    return ngrams(s, n);
  };
  const auto cg = grams(c);
  const auto rg = grams(r);
  const double m = clipped(cg, rg);
  return f1(m / total(cg), m / total(rg));
}

using Ent = std::pair<std::string, std::string>;

struct Prf {
  double p, r, f;
};

inline Prf ner(const std::vector<std::set<Ent>>& preds, const std::vector<std::set<Ent>>& golds) {
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::vector<Ent> both;
    std::set_intersection(preds[i].begin(), preds[i].end(), golds[i].begin(), golds[i].end(),
                          std::back_inserter(both));
    tp += both.size();
    np += preds[i].size();
    ng += golds[i].size();
  }
  const double p = np ? double(tp) / double(np) : 0.0;
  const double r = ng ? double(tp) / double(ng) : 0.0;
  return {p, r, f1(p, r)};
}

// Fisher-Yates over 0..n-1 with mt19937_64(seed): i from n-1 down to 1, j
// uniform in [0, i] by rejection below the largest multiple of i+1.
inline std::vector<std::size_t> fisher_yates(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  for (std::size_t i = n; i-- > 1;) {
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = eng();
    } while (x >= limit);
    std::swap(v[i], v[x % bound]);
  }
  return v;
}

}  // namespace oracle
