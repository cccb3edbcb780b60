#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "medalign/jsonl.hpp"

namespace medalign::reward {

struct FeatureConfig {
  std::uint32_t hash_dim = 1u << 18;
  std::vector<int> ngram_orders{1, 2, 3};

  void validate() const;
  bool operator==(const FeatureConfig&) const = default;
};

json to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const json& j);

// Sorted, unique indices.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool empty() const { return indices.empty(); }
  bool operator==(const SparseVector&) const = default;
};

// Bucket of one n-gram given as UTF-8 bytes: fnv1a64(bytes) mod hash_dim.
std::uint32_t bucket_of(std::string_view ngram_utf8, std::uint32_t hash_dim);

// Counts of code-point n-grams for every configured order, hashed into
// hash_dim buckets, then L2-normalized. Empty text gives the zero vector.
SparseVector featurize(std::string_view text, const FeatureConfig& cfg);

double dot(const SparseVector& a, const SparseVector& b);
double dot(const std::vector<double>& dense, const SparseVector& s);

// a - b, dropping exact zeros.
SparseVector subtract(const SparseVector& a, const SparseVector& b);

}  // namespace medalign::reward
