#pragma once

#include <string>
#include <string_view>

namespace convctx::unicode {

// Invalid byte sequences decode to U+FFFD.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);

char32_t to_lower(char32_t c);
bool is_punct(char32_t c);
bool is_space(char32_t c);

std::string to_lower(std::string_view utf8);

}  // namespace convctx::unicode
