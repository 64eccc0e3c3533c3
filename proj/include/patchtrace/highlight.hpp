#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "patchtrace/corpus.hpp"
#include "patchtrace/ranker.hpp"
#include "patchtrace/tokenizer.hpp"

namespace patchtrace::highlight {

using text::TokenSpan;

enum class Field { message, diff };
enum class Method { tfidf, lime, none };

std::string_view to_string(Field f) noexcept;
std::string_view to_string(Method m) noexcept;
std::optional<Field> parse_field(std::string_view s) noexcept;
std::optional<Method> parse_method(std::string_view s) noexcept;

struct Item {
  TokenSpan span;
  double weight = 0;

  bool operator==(const Item&) const = default;
};

/// Rationale tokens for one field, sorted by weight descending. Spans are
/// byte offsets into the field's normalized text.
struct Highlight {
  Field field = Field::message;
  Method method = Method::tfidf;
  std::vector<Item> items;

  bool operator==(const Highlight&) const = default;
};

/// {field, method, items:[{start,end,text,weight}]}
nlohmann::json to_json(const Highlight& h);
Highlight highlight_from_json(const nlohmann::json& j);

enum class DiffTfMode { raw, log };

struct HighlightParams {
  double alpha = 1.0;  // per-CVE idf shift
  double beta = 0.01;  // global idf shift
  std::size_t k = 5;   // token budget per field
  DiffTfMode diff_tf_mode = DiffTfMode::raw;
};

/// max(log2(N_q / df_cve) - alpha, 0). Throws Error if the term is not
/// indexed under the CVE.
double idf_cve(const std::string& term, const std::string& cve_id, const corpus::InvertedIndex& index, double alpha);

/// max(log2(N / df) - beta, 0). Throws Error for an unindexed term.
double idf_all(const std::string& term, const corpus::InvertedIndex& index, double beta);

/// 0.5 * log2(1 + tf_msg) + 0.5 * log2(1 + tf_diff).
double logtf(std::size_t tf_msg, std::size_t tf_diff);

struct FieldHighlights {
  Highlight message;
  Highlight diff;
};

/// Scores every term shared by the CVE description and a field and keeps
/// the top k per field. The diff field is the commit's top chunk. Message
/// weight: logtf * idf_cve * idf_all. Diff weight: tf_diff * idf_cve *
/// idf_all (or logtf under DiffTfMode::log). Ties go to first occurrence.
FieldHighlights highlight(const rank::PreparedCve& cve, const rank::PreparedCommit& commit,
                          const HighlightParams& params, const corpus::InvertedIndex& index);

/// Re-expresses a highlight on another tokenization of the same text:
/// each target token takes the max weight of the items overlapping it.
/// Throws Error when an item does not match `text` at its offsets.
Highlight project(const Highlight& source, std::span<const TokenSpan> target, std::string_view text);

/// Projection onto the informative surface tokens of `field_tokens`.
Highlight to_surface(const Highlight& source, std::span<const TokenSpan> field_tokens, std::string_view text);

/// Keeps the first `k` items.
Highlight truncate(Highlight h, std::size_t k);

}  // namespace patchtrace::highlight
