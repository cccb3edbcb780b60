#include "medalign/features.hpp"

#include <algorithm>
#include <cmath>

#include "medalign/digest.hpp"
#include "medalign/error.hpp"
#include "medalign/text.hpp"

namespace medalign::reward {

void FeatureConfig::validate() const {
  if (hash_dim == 0) throw UsageError("hash_dim must be positive");
  if (ngram_orders.empty()) throw UsageError("at least one n-gram order is required");
  for (int n : ngram_orders) {
    if (n < 1) throw UsageError("n-gram orders must be >= 1");
  }
}

json to_json(const FeatureConfig& cfg) {
  return {{"hash_dim", cfg.hash_dim}, {"ngram_orders", cfg.ngram_orders}};
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig cfg;
  cfg.hash_dim = require_field(j, "hash_dim").get<std::uint32_t>();
  cfg.ngram_orders = require_field(j, "ngram_orders").get<std::vector<int>>();
  cfg.validate();
  return cfg;
}

std::uint32_t bucket_of(std::string_view ngram_utf8, std::uint32_t hash_dim) {
  return static_cast<std::uint32_t>(fnv1a64(ngram_utf8) % hash_dim);
}

SparseVector featurize(std::string_view text, const FeatureConfig& cfg) {
  // Byte offset of every code point, plus the end offset, so an n-gram is a
  // plain substring of the input bytes.
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
  }
  const std::size_t n_chars = offsets.size();
  offsets.push_back(text.size());

  std::vector<std::uint32_t> buckets;
  for (int order : cfg.ngram_orders) {
    auto n = static_cast<std::size_t>(order);
    if (n > n_chars) continue;
    for (std::size_t i = 0; i + n <= n_chars; ++i) {
      buckets.push_back(bucket_of(text.substr(offsets[i], offsets[i + n] - offsets[i]), cfg.hash_dim));
    }
  }
  std::sort(buckets.begin(), buckets.end());

  SparseVector v;
  for (std::size_t i = 0; i < buckets.size();) {
    std::size_t j = i;
    while (j < buckets.size() && buckets[j] == buckets[i]) ++j;
    v.indices.push_back(buckets[i]);
    v.values.push_back(static_cast<double>(j - i));
    i = j;
  }
  double norm2 = 0.0;
  for (double x : v.values) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v.values) x *= inv;
  }
  return v;
}

double dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (a.indices[i] > b.indices[j]) {
      ++j;
    } else {
      s += a.values[i++] * b.values[j++];
    }
  }
  return s;
}

double dot(const std::vector<double>& dense, const SparseVector& s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < s.indices.size(); ++k) acc += dense[s.indices[k]] * s.values[k];
  return acc;
}

SparseVector subtract(const SparseVector& a, const SparseVector& b) {
  SparseVector out;
  std::size_t i = 0;
  std::size_t j = 0;
  auto emit = [&](std::uint32_t idx, double v) {
    if (v != 0.0) {
      out.indices.push_back(idx);
      out.values.push_back(v);
    }
  };
  while (i < a.indices.size() || j < b.indices.size()) {
    if (j == b.indices.size() || (i < a.indices.size() && a.indices[i] < b.indices[j])) {
      emit(a.indices[i], a.values[i]);
      ++i;
    } else if (i == a.indices.size() || b.indices[j] < a.indices[i]) {
      emit(b.indices[j], -b.values[j]);
      ++j;
    } else {
      emit(a.indices[i], a.values[i] - b.values[j]);
      ++i;
      ++j;
    }
  }
  return out;
}

}  // namespace medalign::reward
