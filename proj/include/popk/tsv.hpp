#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace popk {

// Splits on a single delimiter, keeping empty fields. One heap allocation for
// the result vector; fields are views into the input line.
inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Whitespace-separated tokens, empty tokens dropped.
inline std::vector<std::string> split_tokens(std::string_view field) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < field.size()) {
    while (i < field.size() && field[i] == ' ') ++i;
    std::size_t j = i;
    while (j < field.size() && field[j] != ' ') ++j;
    if (j > i) out.emplace_back(field.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename Seq>
std::string join(const Seq& items, char delim) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out.push_back(delim);
    out += item;
    first = false;
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t value = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace popk
