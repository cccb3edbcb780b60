#include "medalign/pack.hpp"

#include "medalign/error.hpp"

namespace medalign::pack {

OverlongPolicy parse_overlong_policy(std::string_view name) {
  if (name == "skip") return OverlongPolicy::skip;
  if (name == "truncate_prompt_left") return OverlongPolicy::truncate_prompt_left;
  throw UsageError("unknown overlong policy \"" + std::string(name) + "\"");
}

std::string_view to_string(OverlongPolicy p) {
  return p == OverlongPolicy::skip ? "skip" : "truncate_prompt_left";
}

void PackConfig::validate() const {
  if (max_len < 2) throw UsageError("max_len must be at least 2");
}

namespace {

class SequenceBuilder {
 public:
  SequenceBuilder(TokenId boundary, bool response_only) : boundary_(boundary), response_only_(response_only) {}

  std::size_t size() const { return seq_.token_ids.size(); }
  bool empty() const { return seq_.token_ids.empty(); }

  void append(std::size_t pair_index, const std::vector<TokenId>& prompt, const std::vector<TokenId>& response) {
    PairSpan span;
    span.pair_index = pair_index;
    span.start = size();
    push(prompt, response_only_ ? 0 : 1);
    span.response_start = size();
    push(response, 1);
    span.end = size();
    seq_.boundary_positions.push_back(size());
    seq_.token_ids.push_back(boundary_);
    seq_.loss_mask.push_back(1);
    seq_.pair_spans.push_back(span);
  }

  PackedSequence take() {
    PackedSequence out = std::move(seq_);
    seq_ = {};
    return out;
  }

 private:
  void push(const std::vector<TokenId>& ids, std::uint8_t mask) {
    seq_.token_ids.insert(seq_.token_ids.end(), ids.begin(), ids.end());
    seq_.loss_mask.insert(seq_.loss_mask.end(), ids.size(), mask);
  }

  TokenId boundary_;
  bool response_only_;
  PackedSequence seq_;
};

}  // namespace

PackResult pack_pairs(const std::vector<corpus::PromptResponse>& pairs, const Tokenizer& tok,
                      const PackConfig& cfg) {
  cfg.validate();
  const TokenId boundary = cfg.boundary_token.value_or(tok.boundary_id());
  PackResult result;
  SequenceBuilder current(boundary, cfg.response_only_loss);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto prompt = tok.encode(pairs[i].prompt);
    auto response = tok.encode(pairs[i].response);
    std::size_t cost = prompt.size() + response.size() + 1;
    if (cost > cfg.max_len) {
      if (cfg.overlong_policy == OverlongPolicy::skip || response.size() + 1 > cfg.max_len) {
        result.skipped.push_back({i, cost});
        continue;
      }
      std::size_t drop = cost - cfg.max_len;
      prompt.erase(prompt.begin(), prompt.begin() + static_cast<std::ptrdiff_t>(drop));
      cost = cfg.max_len;
      result.truncated.push_back(i);
    }
    if (current.size() + cost > cfg.max_len) result.sequences.push_back(current.take());
    current.append(i, prompt, response);
  }
  if (!current.empty()) result.sequences.push_back(current.take());
  return result;
}

std::vector<UnpackedPair> unpack(const PackedSequence& seq, const Tokenizer& tok,
                                 std::optional<TokenId> boundary_token) {
  const TokenId boundary = boundary_token.value_or(tok.boundary_id());
  const std::size_t n = seq.token_ids.size();
  if (!seq.loss_mask.empty() && seq.loss_mask.size() != n) {
    throw DataError("packed sequence integrity: loss_mask length differs from token_ids");
  }
  std::vector<UnpackedPair> out;
  std::size_t cursor = 0;
  for (const auto& span : seq.pair_spans) {
    if (span.start < cursor || span.start > span.response_start || span.response_start > span.end ||
        span.end >= n) {
      throw DataError("packed sequence integrity: span [" + std::to_string(span.start) + ", " +
                      std::to_string(span.end) + ") is out of order or out of range");
    }
    if (seq.token_ids[span.end] != boundary) {
      throw DataError("packed sequence integrity: pair " + std::to_string(span.pair_index) +
                      " is not closed by the boundary token");
    }
    UnpackedPair p;
    p.pair_index = span.pair_index;
    auto first = seq.token_ids.begin();
    p.prompt_ids.assign(first + static_cast<std::ptrdiff_t>(span.start),
                        first + static_cast<std::ptrdiff_t>(span.response_start));
    p.response_ids.assign(first + static_cast<std::ptrdiff_t>(span.response_start),
                          first + static_cast<std::ptrdiff_t>(span.end));
    p.prompt = tok.decode(p.prompt_ids);
    p.response = tok.decode(p.response_ids);
    out.push_back(std::move(p));
    cursor = span.end + 1;
  }
  return out;
}

std::vector<std::vector<TokenId>> make_pretrain_examples(const std::vector<corpus::Document>& docs,
                                                         const Tokenizer& tok, const PackConfig& cfg) {
  cfg.validate();
  const TokenId boundary = cfg.boundary_token.value_or(tok.boundary_id());
  std::vector<std::vector<TokenId>> windows;
  std::vector<TokenId> current;
  current.reserve(cfg.max_len);
  auto push = [&](TokenId id) {
    current.push_back(id);
    if (current.size() == cfg.max_len) {
      windows.push_back(std::move(current));
      current = {};
      current.reserve(cfg.max_len);
    }
  };
  for (const auto& d : docs) {
    for (TokenId id : tok.encode(d.text)) push(id);
    push(boundary);
  }
  if (!current.empty()) windows.push_back(std::move(current));
  return windows;
}

json to_json(const PackedSequence& seq) {
  json spans = json::array();
  json starts = json::array();
  for (const auto& s : seq.pair_spans) {
    spans.push_back({s.start, s.end, s.pair_index});
    starts.push_back(s.response_start);
  }
  return {{"token_ids", seq.token_ids},
          {"loss_mask", seq.loss_mask},
          {"pair_spans", std::move(spans)},
          {"response_starts", std::move(starts)}};
}

PackedSequence packed_from_json(const json& j) {
  PackedSequence seq;
  seq.token_ids = require_field(j, "token_ids").get<std::vector<TokenId>>();
  seq.loss_mask = require_field(j, "loss_mask").get<std::vector<std::uint8_t>>();
  const json& spans = require_field(j, "pair_spans");
  std::vector<std::size_t> starts;
  if (auto it = j.find("response_starts"); it != j.end()) starts = it->get<std::vector<std::size_t>>();
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const json& s = spans[k];
    if (!s.is_array() || s.size() != 3) throw DataError("pair span must be [start, end, index]");
    PairSpan span{s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>(), 0};
    span.response_start = k < starts.size() ? starts[k] : span.start;
    seq.pair_spans.push_back(span);
    seq.boundary_positions.push_back(span.end);
  }
  return seq;
}

}  // namespace medalign::pack
