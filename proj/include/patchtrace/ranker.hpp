#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "patchtrace/corpus.hpp"
#include "patchtrace/tokenizer.hpp"

namespace patchtrace::rank {

using text::TokenSpan;

inline constexpr std::size_t kChunkTokens = 64;

/// A contiguous slice of a token list; views the caller's storage.
struct Chunk {
  std::size_t index = 0;
  std::span<const TokenSpan> tokens;
};

/// Consecutive chunks of `chunk_size` surface tokens (subwords travel with
/// their surface token). The last chunk may be shorter.
std::vector<Chunk> chunk_diff(std::span<const TokenSpan> tokens, std::size_t chunk_size = kChunkTokens);

/// Informative tokens only; punctuation never reaches the scorer.
std::vector<TokenSpan> informative_only(std::span<const TokenSpan> tokens);

/// Sorted term -> weight pairs.
using TermVector = std::vector<std::pair<std::string, double>>;

/// Global idf = log2(N / df). Unindexed terms have idf 0.
class IdfTable {
 public:
  IdfTable() = default;
  explicit IdfTable(const corpus::InvertedIndex& index);

  double idf(const std::string& term) const;

 private:
  std::unordered_map<std::string, double> idf_;
};

/// Raw term counts times global idf over the informative tokens.
TermVector tfidf_vector(std::span<const TokenSpan> tokens, const IdfTable& idf);
/// 0 when either vector has zero norm.
double cosine(const TermVector& a, const TermVector& b);

/// Highest tf-idf cosine with the CVE; ties go to the lowest index.
/// nullopt for an empty chunk list.
std::optional<std::size_t> select_top_chunk(std::span<const Chunk> chunks, std::span<const TokenSpan> cve_tokens,
                                            const IdfTable& idf);

/// Higher score means more likely to be the patch. Implementations must be
/// deterministic and safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::span<const TokenSpan> cve, std::span<const TokenSpan> message,
                       std::span<const TokenSpan> diff) const = 0;
  virtual std::string name() const = 0;
};

/// 0.8 * cos(message, cve) + 0.2 * cos(top diff chunk, cve).
class TfIdfScorer final : public Scorer {
 public:
  explicit TfIdfScorer(const corpus::InvertedIndex& index, double message_weight = 0.8, double diff_weight = 0.2);

  double score(std::span<const TokenSpan> cve, std::span<const TokenSpan> message,
               std::span<const TokenSpan> diff) const override;
  std::string name() const override { return "tfidf"; }

  const IdfTable& idf() const noexcept { return idf_; }

 private:
  IdfTable idf_;
  double message_weight_;
  double diff_weight_;
};

struct PreparedCve {
  std::string cve_id;
  text::Normalized description;
  std::vector<TokenSpan> tokens;
};

struct PreparedCommit {
  std::string commit_id;
  bool is_patch = false;
  text::Normalized message;
  std::vector<TokenSpan> message_tokens;
  text::Normalized diff;
  std::vector<TokenSpan> diff_tokens;
  // Informative diff tokens; the top chunk is [chunk_begin, chunk_end) here.
  std::vector<TokenSpan> diff_terms;
  std::optional<std::size_t> top_chunk;
  std::size_t chunk_begin = 0;
  std::size_t chunk_end = 0;

  std::span<const TokenSpan> top_chunk_tokens() const {
    return std::span<const TokenSpan>(diff_terms).subspan(chunk_begin, chunk_end - chunk_begin);
  }
};

PreparedCve prepare_cve(const corpus::CveRecord& cve);
PreparedCommit prepare_commit(const corpus::CommitRecord& commit, bool is_patch, const PreparedCve& cve,
                              const IdfTable& idf);

/// Reference scorer on a prepared pair.
double score_tfidf(const PreparedCve& cve, const PreparedCommit& commit, const corpus::InvertedIndex& index);

struct RankedEntry {
  std::string commit_id;
  double score = 0;  // reported as "proba"
  bool is_patch = false;

  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::string cve_id;
  std::vector<RankedEntry> entries;

  bool operator==(const RankedList&) const = default;
};

/// Sorts by score descending, commit id ascending.
RankedList make_ranked_list(std::string cve_id, std::vector<RankedEntry> entries);

RankedList rank(const PreparedCve& cve, std::span<const PreparedCommit> candidates, const Scorer& scorer);

// Per-query metrics over a ranked list.
double precision_at(const RankedList& list, std::size_t k);
double recall_at(const RankedList& list, std::size_t k);
double average_precision(const RankedList& list);
std::size_t positives(const RankedList& list);

struct MetricsReport {
  double prec_at_1 = 0;
  double recall_at_1 = 0;
  double recall_at_2 = 0;
  double recall_at_5 = 0;
  double map = 0;
  std::optional<double> auc;  // absent when the pool lacks a class
  std::size_t n_queries = 0;
  std::size_t excluded_queries = 0;  // queries without a positive
};

/// Query-averaged ranking metrics plus AUC over the pooled
/// (score, label) pairs of all included queries; tied scores count 0.5.
MetricsReport eval_metrics(std::span<const RankedList> lists);

/// Mann-Whitney AUC with tie correction.
std::optional<double> pooled_auc(std::vector<std::pair<double, bool>> scored);

struct PreparedQuery {
  PreparedCve cve;
  std::vector<PreparedCommit> commits;
  corpus::Split split = corpus::Split::test;
};

/// Index over the full dataset plus prepared queries for one fold (or all).
struct Workspace {
  corpus::InvertedIndex index;
  IdfTable idf;
  std::vector<PreparedQuery> queries;
};

Workspace prepare_workspace(const corpus::Dataset& dataset, std::optional<corpus::Split> fold,
                            std::size_t jobs = 1);

}  // namespace patchtrace::rank
