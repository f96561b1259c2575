#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace perq {

/// Decodes UTF-8 into code points; invalid bytes become U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);
void utf8_append(std::string& out, char32_t cp);

/// Locale-independent lowercase for ASCII, Latin-1, Latin Extended-A,
/// Greek and Cyrillic. Other code points are returned unchanged.
char32_t simple_lower(char32_t cp);

bool is_unicode_space(char32_t cp);

/// Lowercases, collapses whitespace runs to one space and trims.
std::u32string normalize_for_features(std::string_view text);

/// ASCII lowercase copy.
std::string ascii_lower(std::string_view s);

bool is_emoji(char32_t cp);

}  // namespace perq
