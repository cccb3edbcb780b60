#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medalign/corpus.hpp"
#include "medalign/jsonl.hpp"
#include "medalign/tokenizer.hpp"

namespace medalign::pack {

enum class OverlongPolicy { skip, truncate_prompt_left };

OverlongPolicy parse_overlong_policy(std::string_view name);
std::string_view to_string(OverlongPolicy p);

struct PackConfig {
  std::size_t max_len = 4096;
  // Defaults to the tokenizer's boundary id.
  std::optional<TokenId> boundary_token;
  OverlongPolicy overlong_policy = OverlongPolicy::skip;
  // true: loss only on response tokens and the closing boundary.
  bool response_only_loss = true;

  void validate() const;
};

// Tokens [start, end) hold prompt then response; the boundary sits at `end`.
struct PairSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t pair_index = 0;
  std::size_t response_start = 0;

  bool operator==(const PairSpan&) const = default;
};

struct PackedSequence {
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> loss_mask;
  std::vector<PairSpan> pair_spans;
  std::vector<std::size_t> boundary_positions;

  bool operator==(const PackedSequence&) const = default;
};

struct SkippedPair {
  std::size_t pair_index = 0;
  std::size_t cost = 0;
};

struct PackResult {
  std::vector<PackedSequence> sequences;
  std::vector<SkippedPair> skipped;
  // Pairs whose prompt lost tokens under truncate_prompt_left.
  std::vector<std::size_t> truncated;
};

// Greedy in-order first-fit: each pair (prompt + response + boundary) goes
// into the open sequence if it fits, otherwise a new sequence is opened.
// Pairs are never split across sequences.
PackResult pack_pairs(const std::vector<corpus::PromptResponse>& pairs, const Tokenizer& tok,
                      const PackConfig& cfg);

struct UnpackedPair {
  std::size_t pair_index = 0;
  std::vector<TokenId> prompt_ids;
  std::vector<TokenId> response_ids;
  std::string prompt;
  std::string response;
};

// Throws DataError when spans are out of order, out of range, or not closed
// by the boundary token.
std::vector<UnpackedPair> unpack(const PackedSequence& seq, const Tokenizer& tok,
                                 std::optional<TokenId> boundary_token = std::nullopt);

// Documents joined with a boundary after each, cut into windows of max_len
// tokens. The last window keeps whatever is left, without padding.
std::vector<std::vector<TokenId>> make_pretrain_examples(const std::vector<corpus::Document>& docs,
                                                         const Tokenizer& tok, const PackConfig& cfg);

// {"token_ids":[...],"loss_mask":[...],"pair_spans":[[s,e,i],...],"response_starts":[...]}
json to_json(const PackedSequence& seq);
PackedSequence packed_from_json(const json& j);

}  // namespace medalign::pack
