#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "medalign/reward.hpp"

namespace medalign::reward {

struct SplitSpec {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + validation + test; }
  void validate(std::size_t dataset_size) const;

  // Scales the 3,800 / 100 / 100 proportions to n items; rounding leftovers
  // go to the training split.
  static SplitSpec proportional(std::size_t n);
};

struct RewardTrainConfig {
  int epochs = 2;
  std::size_t batch_size = 8;
  double peak_lr = 1e-2;
  double final_lr_fraction = 0.1;
  double warmup_fraction = 0.03;
  std::size_t min_warmup_steps = 5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.1;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 10;
  FeatureConfig features;

  // Linear-model default (peak 1e-2).
  static RewardTrainConfig desk();
  // Recorded LLM schedule (peak 5e-6).
  static RewardTrainConfig recorded();

  std::size_t steps_per_epoch(std::size_t train_size) const;
  std::size_t total_steps(std::size_t train_size) const;
  std::size_t warmup_steps(std::size_t total) const;
  void validate() const;
};

// Linear warmup to peak over `warmup` steps, then cosine decay reaching
// peak * final_fraction on the last step. `step` is 0-based.
double learning_rate(const RewardTrainConfig& cfg, std::size_t step, std::size_t total_steps);

// Decoupled weight decay Adam over a dense weight vector.
class AdamW {
 public:
  AdamW(std::size_t dim, double beta1, double beta2, double epsilon, double weight_decay);

  // `grad` is sparse; coordinates absent from it still get moment decay and
  // weight decay.
  void step(std::vector<double>& weights, const SparseVector& grad, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_;
  double beta2_;
  double epsilon_;
  double weight_decay_;
  std::size_t t_ = 0;
};

struct CurvePoint {
  std::size_t step = 0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  RewardModelParams params;
  std::vector<CurvePoint> curve;
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;
  double final_train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct SplitPairs {
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> validation;
  std::vector<PreferencePair> test;
};

// Shuffles with `seed`, then cuts train / validation / test in that order.
SplitPairs split_pairs(const std::vector<PreferencePair>& pairs, const SplitSpec& split, std::uint64_t seed);

// Mini-batch training of the pairwise logistic loss. The validation curve is
// sampled every eval_interval steps and after the last step, so it has
// ceil(total_steps / eval_interval) points. Throws DataError if the loss
// becomes non-finite.
TrainResult train_reward(const std::vector<PreferencePair>& pairs, const SplitSpec& split,
                         const RewardTrainConfig& cfg);

// Same, on an explicit split.
TrainResult train_reward(const SplitPairs& data, const RewardTrainConfig& cfg);

std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace medalign::reward
