#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lexprompt::utf8 {

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD.
std::u32string decode(std::string_view text);

std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);

// Splits into one string per code point.
std::vector<std::string> chars(std::string_view text);

bool is_space(char32_t cp);

std::string trim(std::string_view text);

}  // namespace lexprompt::utf8
