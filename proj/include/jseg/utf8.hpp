#pragma once

#include <string>
#include <string_view>

namespace jseg::utf8 {

/// Decodes UTF-8 into code points. Throws jseg::Error on malformed input.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view text);
std::string encode(char32_t ch);

/// Parses "U+4E00" style code point notation.
char32_t parse_codepoint(std::string_view token);

}  // namespace jseg::utf8
