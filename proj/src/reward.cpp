#include "medalign/reward.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "medalign/digest.hpp"
#include "medalign/error.hpp"
#include "medalign/random.hpp"

namespace medalign::reward {

void RankedInstance::validate() const {
  if (responses.size() < 2) throw DataError("ranked instance needs at least two responses");
  std::set<std::string> seen;
  for (const auto& r : responses) {
    if (!seen.insert(r).second) throw DataError("ranked instance " + id + " repeats a response");
  }
}

json to_json(const PreferencePair& p) {
  return {{"prompt", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}, {"rank_gap", p.rank_gap}};
}

PreferencePair pair_from_json(const json& j) {
  PreferencePair p{require_string(j, "prompt"), require_string(j, "chosen"), require_string(j, "rejected"), 1};
  if (auto it = j.find("rank_gap"); it != j.end()) p.rank_gap = it->get<int>();
  if (p.chosen == p.rejected) throw DataError("chosen and rejected are identical");
  if (p.rank_gap < 1) throw DataError("rank_gap must be >= 1");
  return p;
}

RankedInstance augment_ranking(const corpus::PreferenceRaw& raw, const std::vector<std::string>& intermediates,
                               const std::vector<std::string>& intermediate_provenance) {
  RankedInstance r;
  r.id = raw.id;
  r.prompt = raw.prompt;
  r.responses.push_back(raw.accepted);
  r.provenance.push_back("accepted");
  for (std::size_t i = 0; i < intermediates.size(); ++i) {
    r.responses.push_back(intermediates[i]);
    r.provenance.push_back(i < intermediate_provenance.size() ? intermediate_provenance[i]
                                                              : "intermediate-" + std::to_string(i + 1));
  }
  r.responses.push_back(raw.rejected);
  r.provenance.push_back("rejected");
  r.validate();
  return r;
}

std::vector<PreferencePair> adjacent_pairs(const RankedInstance& ranked) {
  ranked.validate();
  std::vector<PreferencePair> out;
  out.reserve(ranked.responses.size() - 1);
  for (std::size_t i = 0; i + 1 < ranked.responses.size(); ++i) {
    out.push_back({ranked.prompt, ranked.responses[i], ranked.responses[i + 1], 1});
  }
  return out;
}

PreferencePair binary_pair(const RankedInstance& ranked) {
  ranked.validate();
  return {ranked.prompt, ranked.responses.front(), ranked.responses.back(),
          static_cast<int>(ranked.responses.size() - 1)};
}

RewardModelParams RewardModelParams::zeros(const FeatureConfig& features, std::uint64_t seed) {
  features.validate();
  RewardModelParams p;
  p.features = features;
  p.weights.assign(features.hash_dim, 0.0);
  p.seed = seed;
  return p;
}

void RewardModelParams::validate() const {
  features.validate();
  if (weights.size() != features.hash_dim) {
    throw DataError("weight dimension " + std::to_string(weights.size()) + " does not match hash_dim " +
                    std::to_string(features.hash_dim));
  }
  if (!std::isfinite(bias)) throw DataError("non-finite bias");
  for (double w : weights) {
    if (!std::isfinite(w)) throw DataError("non-finite weight");
  }
}

SparseVector featurize_pair(std::string_view prompt, std::string_view response, const FeatureConfig& cfg) {
  std::string joined;
  joined.reserve(prompt.size() + response.size() + kPromptResponseSeparator.size());
  joined.append(prompt).append(kPromptResponseSeparator).append(response);
  return medalign::reward::featurize(joined, cfg);
}

double score(const RewardModelParams& params, const SparseVector& features) {
  return dot(params.weights, features) + params.bias;
}

double score(const RewardModelParams& params, std::string_view prompt, std::string_view response) {
  return score(params, featurize_pair(prompt, response, params.features));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double ranking_loss(double r_chosen, double r_rejected) {
  // softplus(-margin)
  const double m = r_chosen - r_rejected;
  if (m > 0.0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

PairFeatures featurize(const PreferencePair& pair, const FeatureConfig& cfg) {
  return {featurize_pair(pair.prompt, pair.chosen, cfg), featurize_pair(pair.prompt, pair.rejected, cfg)};
}

std::vector<PairFeatures> featurize_all(const std::vector<PreferencePair>& pairs, const FeatureConfig& cfg) {
  std::vector<PairFeatures> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(featurize(p, cfg));
  return out;
}

double pair_loss(const RewardModelParams& params, const PairFeatures& f) {
  return ranking_loss(score(params, f.chosen), score(params, f.rejected));
}

SparseVector pair_loss_gradient(const RewardModelParams& params, const PairFeatures& f) {
  const double margin = dot(params.weights, f.chosen) - dot(params.weights, f.rejected);
  const double coeff = -sigmoid(-margin);
  SparseVector g = subtract(f.chosen, f.rejected);
  for (double& v : g.values) v *= coeff;
  return g;
}

GradCheckResult grad_check(const RewardModelParams& params, const PreferencePair& pair, double epsilon,
                           std::size_t max_coordinates, std::uint64_t seed, const GradientFn& analytic) {
  if (!(epsilon >= 1e-8 && epsilon <= 1e-3)) throw UsageError("grad_check epsilon must lie in [1e-8, 1e-3]");
  params.validate();
  const PairFeatures f = featurize(pair, params.features);
  const SparseVector diff = subtract(f.chosen, f.rejected);

  std::vector<std::uint32_t> coords;
  for (std::size_t k = 0; k < diff.indices.size(); ++k) {
    if (std::abs(diff.values[k]) >= 1e-3) coords.push_back(diff.indices[k]);
  }
  if (coords.empty()) {
    std::set<std::uint32_t> active(f.chosen.indices.begin(), f.chosen.indices.end());
    active.insert(f.rejected.indices.begin(), f.rejected.indices.end());
    coords.assign(active.begin(), active.end());
  }
  if (coords.size() > max_coordinates) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(max_coordinates);
  }

  const SparseVector grad = analytic(params, f);
  auto analytic_at = [&](std::uint32_t idx) {
    auto it = std::lower_bound(grad.indices.begin(), grad.indices.end(), idx);
    if (it == grad.indices.end() || *it != idx) return 0.0;
    return grad.values[static_cast<std::size_t>(it - grad.indices.begin())];
  };

  GradCheckResult result;
  RewardModelParams probe = params;
  for (std::uint32_t idx : coords) {
    const double original = probe.weights[idx];
    probe.weights[idx] = original + epsilon;
    const double up = pair_loss(probe, f);
    probe.weights[idx] = original - epsilon;
    const double down = pair_loss(probe, f);
    probe.weights[idx] = original;

    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic_at(idx);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double rel = scale > 0.0 ? std::abs(a - numeric) / scale : 0.0;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    result.max_abs_analytic = std::max(result.max_abs_analytic, std::abs(a));
    result.max_abs_numeric = std::max(result.max_abs_numeric, std::abs(numeric));
    ++result.coordinates;
  }
  return result;
}

double eval_accuracy(const RewardModelParams& params, const std::vector<PairFeatures>& pairs) {
  if (pairs.empty()) throw DataError("eval_accuracy needs at least one pair");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (score(params, p.chosen) > score(params, p.rejected)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double eval_accuracy(const RewardModelParams& params, const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw DataError("eval_accuracy needs at least one pair");
  return eval_accuracy(params, featurize_all(pairs, params.features));
}

namespace {

constexpr char kMagic[8] = {'M', 'E', 'D', 'R', 'W', 'D', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string serialize(const RewardModelParams& params) {
  params.validate();
  json header = {{"features", to_json(params.features)},
                 {"seed", params.seed},
                 {"dim", params.weights.size()},
                 {"bias_bits", std::bit_cast<std::uint64_t>(params.bias)}};
  std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + params.weights.size() * 8);
  for (double w : params.weights) put_f64(out, w);
  return out;
}

RewardModelParams deserialize(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a reward-model parameter file");
  }
  const auto header_len = static_cast<std::size_t>(get_le(bytes, 8, 4));
  if (bytes.size() < 12 + header_len) throw DataError("truncated reward-model header");
  json header = json::parse(bytes.substr(12, header_len));
  RewardModelParams p;
  p.features = feature_config_from_json(require_field(header, "features"));
  p.seed = require_field(header, "seed").get<std::uint64_t>();
  p.bias = std::bit_cast<double>(require_field(header, "bias_bits").get<std::uint64_t>());
  const auto dim = require_field(header, "dim").get<std::size_t>();
  const std::size_t body = 12 + header_len;
  if (bytes.size() != body + dim * 8) throw DataError("reward-model weight block has the wrong size");
  p.weights.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) p.weights[i] = std::bit_cast<double>(get_le(bytes, body + i * 8, 8));
  p.validate();
  return p;
}

void save_params(const std::filesystem::path& path, const RewardModelParams& params) {
  write_text(path, serialize(params));
}

RewardModelParams load_params(const std::filesystem::path& path) { return deserialize(read_text(path)); }

std::string params_checksum(const RewardModelParams& params) { return sha256_hex(serialize(params)); }

}  // namespace medalign::reward
