#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace vqag::text {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Lowercases, deletes apostrophes, maps every other non-alphanumeric byte to
// a space and collapses runs of spaces. "What's up, Doc?" -> "whats up doc".
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (c == '\'') continue;
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  const std::string norm = normalize(s);
  std::size_t pos = 0;
  while (pos < norm.size()) {
    auto next = norm.find(' ', pos);
    if (next == std::string::npos) next = norm.size();
    if (next > pos) tokens.emplace_back(norm.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    parts.emplace_back(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

inline bool starts_with_words(std::string_view haystack, std::string_view prefix) {
  if (prefix.empty() || haystack.size() < prefix.size()) return false;
  if (haystack.substr(0, prefix.size()) != prefix) return false;
  return haystack.size() == prefix.size() || haystack[prefix.size()] == ' ';
}

// Nine significant digits; used for every real written to CSV/NDJSON.
inline std::string format_real(double v) {
  if (v == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline double round_sig9(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  return std::stod(format_real(v));
}

}  // namespace vqag::text
