#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace patchtrace::text {

/// Prose fields (CVE description, commit message) keep single spaces;
/// code fields lose all whitespace.
enum class FieldKind { prose, code };

enum class Origin : std::uint8_t { surface, subword };

struct TokenSpan {
  std::string text;
  std::size_t start = 0;  // byte offset into the normalized text
  std::size_t end = 0;    // exclusive
  Origin origin = Origin::surface;
  // Ordinal of the owning surface token. Subwords share their parent's.
  std::size_t surface_index = 0;

  bool operator==(const TokenSpan&) const = default;
};

/// Normalized text plus, for every byte, its offset in the raw input.
/// `source_offsets` has text.size() + 1 entries; the last is raw.size().
struct Normalized {
  std::string text;
  std::vector<std::size_t> source_offsets;
};

Normalized normalize_mapped(std::string_view raw, FieldKind kind);
std::string normalize(std::string_view raw, FieldKind kind);

/// Surface tokens are maximal runs of word characters (ASCII letters,
/// digits, underscore, and any non-ASCII byte) or single punctuation
/// characters. Identifiers with underscores or case changes are followed
/// by their subword pieces.
std::vector<TokenSpan> tokenize(std::string_view normalized);

/// Piece boundaries of an identifier as [start, end) pairs relative to the
/// word. Empty when the word does not split.
std::vector<std::pair<std::size_t, std::size_t>> split_identifier(std::string_view word);

bool is_word_char(char c) noexcept;
bool is_informative(std::string_view token) noexcept;

/// ASCII lowercase fold used for every term comparison.
std::string fold(std::string_view s);

/// Number of surface tokens in a token list.
std::size_t surface_count(std::span<const TokenSpan> tokens) noexcept;

/// Keeps the surface tokens whose ordinal satisfies `keep` together with
/// their subwords, preserving order. Ordinals are not renumbered.
template <typename Pred>
std::vector<TokenSpan> filter_surface(std::span<const TokenSpan> tokens, Pred keep) {
  std::vector<TokenSpan> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (keep(t.surface_index)) out.push_back(t);
  }
  return out;
}

}  // namespace patchtrace::text
