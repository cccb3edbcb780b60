#include "medalign/tokenizer.hpp"

#include <fstream>

#include "medalign/error.hpp"
#include "medalign/text.hpp"

namespace medalign {

std::vector<TokenId> CharTokenizer::encode(std::string_view text) const {
  auto cps = text::decode_utf8(text);
  return {cps.begin(), cps.end()};
}

std::string CharTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || id > 0x10FFFF) throw DataError("token id " + std::to_string(id) + " is not a character");
    text::append_utf8(out, static_cast<char32_t>(id));
  }
  return out;
}

VocabTokenizer::VocabTokenizer(std::vector<std::string> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto cps = text::decode_utf8(entries_[i]);
    if (cps.empty()) throw DataError("empty vocabulary entry at line " + std::to_string(i + 1));
    longest_ = std::max(longest_, cps.size());
    lookup_.emplace(std::move(cps), static_cast<TokenId>(i));
  }
}

namespace {
std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    entries.push_back(line);
  }
  return entries;
}
}  // namespace

VocabTokenizer::VocabTokenizer(const std::filesystem::path& vocab_file)
    : VocabTokenizer(read_vocab(vocab_file)) {
  name_ = vocab_file.string();
}

std::vector<TokenId> VocabTokenizer::encode(std::string_view text) const {
  auto cps = text::decode_utf8(text);
  std::vector<TokenId> ids;
  std::size_t i = 0;
  while (i < cps.size()) {
    std::size_t max_len = std::min(longest_, cps.size() - i);
    bool matched = false;
    for (std::size_t len = max_len; len >= 1; --len) {
      auto it = lookup_.find(cps.substr(i, len));
      if (it != lookup_.end()) {
        ids.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      ids.push_back(unknown_id());
      ++i;
    }
  }
  return ids;
}

std::string VocabTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= 0 && static_cast<std::size_t>(id) < entries_.size()) {
      out += entries_[static_cast<std::size_t>(id)];
    } else if (id == unknown_id()) {
      out += "\xEF\xBF\xBD";
    } else {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view source) {
  if (source.empty() || source == "builtin:char" || source == "builtin") {
    return std::make_unique<CharTokenizer>();
  }
  return std::make_unique<VocabTokenizer>(std::filesystem::path(source));
}

}  // namespace medalign
