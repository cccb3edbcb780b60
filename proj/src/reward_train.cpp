#include "medalign/reward_train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "medalign/error.hpp"
#include "medalign/random.hpp"

namespace medalign::reward {

void SplitSpec::validate(std::size_t dataset_size) const {
  if (total() != dataset_size) {
    throw DataError("split " + std::to_string(train) + "/" + std::to_string(validation) + "/" +
                    std::to_string(test) + " does not sum to dataset size " + std::to_string(dataset_size));
  }
}

SplitSpec SplitSpec::proportional(std::size_t n) {
  SplitSpec s;
  s.validation = n / 40;  // 100 of 4,000
  s.test = n / 40;
  s.train = n - s.validation - s.test;
  return s;
}

RewardTrainConfig RewardTrainConfig::desk() { return {}; }

RewardTrainConfig RewardTrainConfig::recorded() {
  RewardTrainConfig cfg;
  cfg.peak_lr = 5e-6;
  return cfg;
}

std::size_t RewardTrainConfig::steps_per_epoch(std::size_t train_size) const {
  return (train_size + batch_size - 1) / batch_size;
}

std::size_t RewardTrainConfig::total_steps(std::size_t train_size) const {
  return steps_per_epoch(train_size) * static_cast<std::size_t>(std::max(epochs, 0));
}

std::size_t RewardTrainConfig::warmup_steps(std::size_t total) const {
  auto fraction = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total)));
  return std::max(fraction, min_warmup_steps);
}

void RewardTrainConfig::validate() const {
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  if (!(peak_lr > 0.0)) throw UsageError("peak_lr must be positive");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw UsageError("final_lr_fraction must lie in (0, 1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must lie in [0, 1)");
  if (eval_interval == 0) throw UsageError("eval_interval must be >= 1");
  features.validate();
}

double learning_rate(const RewardTrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  const std::size_t warmup = cfg.warmup_steps(total_steps);
  if (step < warmup) {
    return cfg.peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const std::size_t decay_steps = total_steps - warmup;
  const double progress =
      decay_steps <= 1 ? 1.0 : static_cast<double>(step - warmup) / static_cast<double>(decay_steps - 1);
  const double floor = cfg.peak_lr * cfg.final_lr_fraction;
  return floor + (cfg.peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::size_t dim, double beta1, double beta2, double epsilon, double weight_decay)
    : m_(dim, 0.0), v_(dim, 0.0), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {}

void AdamW::step(std::vector<double>& weights, const SparseVector& grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double g = 0.0;
    if (k < grad.indices.size() && grad.indices[k] == i) g = grad.values[k++];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    weights[i] -= lr * (m_hat / (std::sqrt(v_hat) + epsilon_) + weight_decay_ * weights[i]);
  }
}

SplitPairs split_pairs(const std::vector<PreferencePair>& pairs, const SplitSpec& split, std::uint64_t seed) {
  split.validate(pairs.size());
  auto order = shuffled_indices(pairs.size(), seed);
  SplitPairs out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = pairs[order[k]];
    if (k < split.train) {
      out.train.push_back(p);
    } else if (k < split.train + split.validation) {
      out.validation.push_back(p);
    } else {
      out.test.push_back(p);
    }
  }
  return out;
}

namespace {

// Mean gradient of a batch as a sorted sparse vector.
SparseVector batch_gradient(const RewardModelParams& params, const std::vector<PairFeatures>& data,
                            const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                            double& loss_sum) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::size_t k = begin; k < end; ++k) {
    const auto& f = data[order[k]];
    loss_sum += pair_loss(params, f);
    SparseVector g = pair_loss_gradient(params, f);
    for (std::size_t i = 0; i < g.indices.size(); ++i) entries.emplace_back(g.indices[i], g.values[i]);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector out;
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (const auto& [idx, val] : entries) {
    if (!out.indices.empty() && out.indices.back() == idx) {
      out.values.back() += val * inv;
    } else {
      out.indices.push_back(idx);
      out.values.push_back(val * inv);
    }
  }
  return out;
}

}  // namespace

TrainResult train_reward(const std::vector<PreferencePair>& pairs, const SplitSpec& split,
                         const RewardTrainConfig& cfg) {
  return train_reward(split_pairs(pairs, split, cfg.seed), cfg);
}

TrainResult train_reward(const SplitPairs& data, const RewardTrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.params = RewardModelParams::zeros(cfg.features, cfg.seed);
  result.total_steps = cfg.total_steps(data.train.size());
  if (result.total_steps == 0) return result;

  result.warmup_steps = cfg.warmup_steps(result.total_steps);
  if (result.warmup_steps >= result.total_steps) {
    throw DataError("warmup (" + std::to_string(result.warmup_steps) + " steps) must be shorter than training (" +
                    std::to_string(result.total_steps) + " steps); add data or epochs");
  }
  if (data.validation.empty()) throw DataError("reward training needs a non-empty validation split");

  const auto train = featurize_all(data.train, cfg.features);
  const auto val = featurize_all(data.validation, cfg.features);

  AdamW opt(cfg.features.hash_dim, cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.weight_decay);
  Rng rng(mix_seed(cfg.seed, 0x7265776172640001ULL));
  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  double last_epoch_loss = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      double batch_loss = 0.0;
      SparseVector grad = batch_gradient(result.params, train, order, begin, end, batch_loss);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (epoch " << epoch << ", lr "
           << learning_rate(cfg, step, result.total_steps) << ")";
        throw DataError(os.str());
      }
      epoch_loss += batch_loss;
      opt.step(result.params.weights, grad, learning_rate(cfg, step, result.total_steps));
      ++step;
      if (step % cfg.eval_interval == 0 || step == result.total_steps) {
        result.curve.push_back({step, eval_accuracy(result.params, val)});
      }
    }
    last_epoch_loss = epoch_loss / static_cast<double>(train.size());
  }

  result.final_train_loss = last_epoch_loss;
  result.train_accuracy = eval_accuracy(result.params, train);
  result.val_accuracy = eval_accuracy(result.params, val);
  if (!data.test.empty()) {
    result.test_accuracy = eval_accuracy(result.params, featurize_all(data.test, cfg.features));
  }
  return result;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,val_accuracy\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& p : curve) os << p.step << ',' << p.val_accuracy << '\n';
  return os.str();
}

}  // namespace medalign::reward
