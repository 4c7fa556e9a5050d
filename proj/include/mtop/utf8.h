#ifndef MTOP_UTF8_H_
#define MTOP_UTF8_H_

#include <string>
#include <string_view>
#include <vector>

namespace mtop::utf8 {

// Splits into code points; invalid bytes come back as single-byte strings.
std::vector<std::string> split_chars(std::string_view text);

// Decodes the code point starting at text[pos]; returns its byte length.
size_t decode(std::string_view text, size_t pos, char32_t* cp);

std::string to_lower_ascii(std::string_view text);

}  // namespace mtop::utf8

#endif  // MTOP_UTF8_H_
