#include "patchtrace/tokenizer.hpp"

namespace patchtrace::text {
namespace {

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_upper(char c) noexcept { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) noexcept { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }
bool is_high(char c) noexcept { return static_cast<unsigned char>(c) >= 0x80; }

}  // namespace

bool is_word_char(char c) noexcept {
  return is_upper(c) || is_lower(c) || is_digit(c) || c == '_' || is_high(c);
}

bool is_informative(std::string_view token) noexcept {
  for (char c : token) {
    if (is_upper(c) || is_lower(c) || is_digit(c) || is_high(c)) return true;
  }
  return false;
}

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

Normalized normalize_mapped(std::string_view raw, FieldKind kind) {
  Normalized out;
  out.text.reserve(raw.size());
  out.source_offsets.reserve(raw.size() + 1);
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (is_space(c)) {
      if (kind == FieldKind::prose && !out.text.empty() && !pending_space) {
        pending_space = true;
        out.text.push_back(' ');
        out.source_offsets.push_back(i);
      }
      continue;
    }
    pending_space = false;
    out.text.push_back(c);
    out.source_offsets.push_back(i);
  }
  // Trailing collapsed space.
  if (pending_space) {
    out.text.pop_back();
    out.source_offsets.pop_back();
  }
  out.source_offsets.push_back(raw.size());
  return out;
}

std::string normalize(std::string_view raw, FieldKind kind) {
  return normalize_mapped(raw, kind).text;
}

std::vector<std::pair<std::size_t, std::size_t>> split_identifier(std::string_view word) {
  std::vector<std::pair<std::size_t, std::size_t>> pieces;
  std::size_t i = 0;
  const std::size_t n = word.size();
  while (i < n) {
    while (i < n && word[i] == '_') ++i;
    if (i == n) break;
    std::size_t j = i + 1;
    while (j < n && word[j] != '_') {
      const char prev = word[j - 1];
      const char cur = word[j];
      const bool lower_to_upper = is_lower(prev) && is_upper(cur);
      // "HTTPServer" -> "HTTP" | "Server"
      const bool acronym_end =
          is_upper(prev) && is_upper(cur) && j + 1 < n && is_lower(word[j + 1]);
      if (lower_to_upper || acronym_end) break;
      ++j;
    }
    pieces.emplace_back(i, j);
    i = j;
  }
  if (pieces.size() == 1 && pieces[0].first == 0 && pieces[0].second == n) pieces.clear();
  return pieces;
}

std::vector<TokenSpan> tokenize(std::string_view normalized) {
  std::vector<TokenSpan> out;
  std::size_t surface = 0;
  std::size_t i = 0;
  const std::size_t n = normalized.size();
  while (i < n) {
    const char c = normalized[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (!is_word_char(c)) {
      out.push_back({std::string(1, c), i, i + 1, Origin::surface, surface++});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_word_char(normalized[j])) ++j;
    const std::string_view word = normalized.substr(i, j - i);
    const std::size_t owner = surface++;
    out.push_back({std::string(word), i, j, Origin::surface, owner});
    for (auto [a, b] : split_identifier(word)) {
      out.push_back({std::string(word.substr(a, b - a)), i + a, i + b, Origin::subword, owner});
    }
    i = j;
  }
  return out;
}

std::size_t surface_count(std::span<const TokenSpan> tokens) noexcept {
  std::size_t n = 0;
  for (const auto& t : tokens) n += t.origin == Origin::surface;
  return n;
}

}  // namespace patchtrace::text
