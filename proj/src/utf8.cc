#include "mtop/utf8.h"

namespace mtop::utf8 {

size_t decode(std::string_view text, size_t pos, char32_t* cp) {
  auto byte = [&](size_t i) { return static_cast<unsigned char>(text[i]); };
  unsigned char lead = byte(pos);
  size_t len = 1;
  char32_t value = lead;
  if (lead >= 0xF0 && lead < 0xF8) {
    len = 4;
    value = lead & 0x07;
  } else if (lead >= 0xE0) {
    len = 3;
    value = lead & 0x0F;
  } else if (lead >= 0xC0) {
    len = 2;
    value = lead & 0x1F;
  }
  if (len == 1 || pos + len > text.size()) {
    *cp = lead;
    return 1;
  }
  for (size_t i = 1; i < len; ++i) {
    if ((byte(pos + i) & 0xC0) != 0x80) {
      *cp = lead;
      return 1;
    }
    value = (value << 6) | (byte(pos + i) & 0x3F);
  }
  *cp = value;
  return len;
}

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp;
    size_t len = decode(text, pos, &cp);
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace mtop::utf8
