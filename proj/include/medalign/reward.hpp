#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "medalign/corpus.hpp"
#include "medalign/features.hpp"
#include "medalign/jsonl.hpp"

namespace medalign::reward {

// A prompt with responses ordered best to worst.
struct RankedInstance {
  std::string id;
  std::string prompt;
  std::vector<std::string> responses;
  std::vector<std::string> provenance;

  void validate() const;
};

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int rank_gap = 1;

  bool operator==(const PreferencePair&) const = default;
};

json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const json& j);

// responses = [accepted] ++ intermediates ++ [rejected]. Intermediates are
// given best to worst. Throws DataError if any two slots hold the same text.
RankedInstance augment_ranking(const corpus::PreferenceRaw& raw, const std::vector<std::string>& intermediates,
                               const std::vector<std::string>& intermediate_provenance = {});

// n responses -> n-1 pairs (responses[i] preferred over responses[i+1]).
std::vector<PreferencePair> adjacent_pairs(const RankedInstance& ranked);

// Only the top-vs-bottom pair: the original binary task.
PreferencePair binary_pair(const RankedInstance& ranked);

struct RewardModelParams {
  FeatureConfig features;
  std::vector<double> weights;
  double bias = 0.0;
  std::uint64_t seed = 0;

  static RewardModelParams zeros(const FeatureConfig& features, std::uint64_t seed = 0);
  void validate() const;
  bool operator==(const RewardModelParams&) const = default;
};

inline constexpr std::string_view kPromptResponseSeparator = "\x1e";

// Features of prompt + separator + response.
SparseVector featurize_pair(std::string_view prompt, std::string_view response, const FeatureConfig& cfg);

double score(const RewardModelParams& params, const SparseVector& features);
double score(const RewardModelParams& params, std::string_view prompt, std::string_view response);

// -log sigmoid(r_chosen - r_rejected), evaluated without overflow.
double ranking_loss(double r_chosen, double r_rejected);

double sigmoid(double x);

// Precomputed features of one preference pair.
struct PairFeatures {
  SparseVector chosen;
  SparseVector rejected;
};

PairFeatures featurize(const PreferencePair& pair, const FeatureConfig& cfg);
std::vector<PairFeatures> featurize_all(const std::vector<PreferencePair>& pairs, const FeatureConfig& cfg);

double pair_loss(const RewardModelParams& params, const PairFeatures& f);

// Gradient of pair_loss with respect to the weights. The bias cancels in the
// score difference, so its gradient is always zero.
SparseVector pair_loss_gradient(const RewardModelParams& params, const PairFeatures& f);

using GradientFn = std::function<SparseVector(const RewardModelParams&, const PairFeatures&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares `analytic` with central differences of pair_loss on up to
// max_coordinates weights. Coordinates are drawn from those where the two
// feature vectors differ by at least 1e-3 (falling back to all active ones);
// relative error is |a - n| / max(|a|, |n|), and 0 when both are 0.
GradCheckResult grad_check(const RewardModelParams& params, const PreferencePair& pair, double epsilon,
                           std::size_t max_coordinates = 64, std::uint64_t seed = 0,
                           const GradientFn& analytic = pair_loss_gradient);

// Fraction of pairs with score(chosen) > score(rejected); ties are wrong.
// Throws DataError on an empty list.
double eval_accuracy(const RewardModelParams& params, const std::vector<PreferencePair>& pairs);
double eval_accuracy(const RewardModelParams& params, const std::vector<PairFeatures>& pairs);

// Binary file: "MEDRWD01", u32 header length, JSON header (features, seed,
// bias, dim), then dim little-endian doubles.
std::string serialize(const RewardModelParams& params);
RewardModelParams deserialize(std::string_view bytes);
void save_params(const std::filesystem::path& path, const RewardModelParams& params);
RewardModelParams load_params(const std::filesystem::path& path);
std::string params_checksum(const RewardModelParams& params);

}  // namespace medalign::reward
