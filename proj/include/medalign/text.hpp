#pragma once

#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers. Every metric and tokenizer in the toolkit works on Unicode
// code points, so this is where bytes become characters.
namespace medalign::text {

// Invalid sequences decode to U+FFFD.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view code_points);
void append_utf8(std::string& out, char32_t cp);

std::size_t count_code_points(std::string_view bytes);

bool is_space(char32_t cp);

// Unicode NFC via ICU.
std::string nfc(std::string_view bytes);

// Trims and replaces every run of Unicode white space with one ASCII space.
std::string collapse_whitespace(std::string_view bytes);

// NFC followed by whitespace collapse: the equality used for de-duplication.
std::string normalize(std::string_view bytes);

std::string trim(std::string_view bytes);
std::string ascii_lower(std::string_view bytes);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace medalign::text
