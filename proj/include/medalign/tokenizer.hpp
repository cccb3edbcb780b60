#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medalign {

using TokenId = std::int32_t;

// Text <-> token ids. Special ids (boundary, pad) never come out of encode().
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;

  virtual TokenId boundary_id() const = 0;
  virtual TokenId pad_id() const = 0;
  virtual std::string name() const = 0;

  std::size_t count(std::string_view text) const { return encode(text).size(); }
};

// One token per Unicode code point; the id is the code point value. Special
// ids sit just above U+10FFFF, so natural text can never produce them.
class CharTokenizer final : public Tokenizer {
 public:
  static constexpr TokenId kBoundary = 0x110000;
  static constexpr TokenId kPad = 0x110001;

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  TokenId boundary_id() const override { return kBoundary; }
  TokenId pad_id() const override { return kPad; }
  std::string name() const override { return "builtin:char"; }
};

// Vocabulary loaded from a file of one UTF-8 token per line (line k -> id k).
// Encoding is greedy longest match; a code point not covered by any entry maps
// to the unknown id. Boundary, pad and unknown ids follow the vocabulary.
class VocabTokenizer final : public Tokenizer {
 public:
  explicit VocabTokenizer(const std::filesystem::path& vocab_file);
  explicit VocabTokenizer(std::vector<std::string> entries);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  TokenId boundary_id() const override { return static_cast<TokenId>(entries_.size()); }
  TokenId pad_id() const override { return boundary_id() + 1; }
  TokenId unknown_id() const { return boundary_id() + 2; }
  std::string name() const override { return name_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::u32string, TokenId> lookup_;
  std::size_t longest_ = 1;
  std::string name_ = "vocab";
};

// "builtin:char" or a path to a vocabulary file.
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view source);

}  // namespace medalign
