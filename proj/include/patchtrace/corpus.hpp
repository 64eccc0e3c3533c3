#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace patchtrace::corpus {

enum class Split { train, validation, test };

std::string_view to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

struct CveRecord {
  std::string cve_id;
  std::string description;
  std::string repo;  // "owner/name"
  std::optional<std::string> patch_commit;
  std::optional<std::string> affected_tag;
  std::optional<std::string> fixed_tag;

  bool operator==(const CveRecord&) const = default;
};

struct CommitRecord {
  std::string commit_id;
  std::string message;
  std::string diff;
  std::vector<std::string> files;
  std::int64_t timestamp = 0;

  bool operator==(const CommitRecord&) const = default;
};

struct Dataset {
  std::vector<CveRecord> cves;
  std::map<std::string, std::vector<CommitRecord>> candidates;
  std::map<std::string, Split> split;

  const CveRecord* find(std::string_view cve_id) const;
  const std::vector<CommitRecord>& commits_of(const std::string& cve_id) const;
  std::size_t commit_count() const;

  bool operator==(const Dataset&) const = default;
};

/// Reads the line-delimited export. Blank lines are skipped.
/// Throws ParseError (with line number) or ValidationError.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(std::istream& in);

/// Checks every Dataset invariant; throws ValidationError naming the record.
void validate(const Dataset& dataset);

/// Canonical line-delimited form: each CVE line followed by its commits.
std::string serialize(const Dataset& dataset);

struct CommitLink {
  std::string repo;  // "owner/name"
  std::string commit_id;

  bool operator==(const CommitLink&) const = default;
};

/// Matches https?://(www.)?github.com/<owner>/<name>/commit/<7-40 hex>
/// in source order, duplicates preserved.
std::vector<CommitLink> extract_commit_links(std::string_view text);

/// Folded informative terms (surface and subword forms) of a commit's
/// message and diff, deduplicated and sorted.
std::vector<std::string> commit_terms(const CommitRecord& commit);

/// Document-frequency index over commits. Each (CVE, commit) entry counts
/// as one document; a commit counts once per term.
class InvertedIndex {
 public:
  static InvertedIndex build(const Dataset& dataset);

  std::size_t total_commits() const noexcept { return total_; }
  /// 0 when the term is not indexed.
  std::size_t df(const std::string& term) const;
  std::size_t cve_commits(const std::string& cve_id) const;
  std::size_t df_cve(const std::string& term, const std::string& cve_id) const;

  const std::unordered_map<std::string, std::size_t>& global_df() const noexcept { return df_; }

 private:
  struct PerCve {
    std::size_t commits = 0;
    std::unordered_map<std::string, std::size_t> df;
  };

  std::size_t total_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
  std::unordered_map<std::string, PerCve> per_cve_;
};

struct CorpusStats {
  double avg_tokens_cve_desc = 0;
  double avg_tokens_msg = 0;
  double avg_tokens_diff = 0;
  double median_tokens_diff = 0;
  double q3_tokens_diff = 0;
  std::size_t n_commits = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::pair<std::size_t, std::size_t> pos_neg_ratio{0, 0};  // reduced by gcd
};

/// Token counts are surface tokens of the normalized field.
CorpusStats compute_stats(const Dataset& dataset);

/// Linear interpolation between order statistics, position (n-1)*q.
double quantile(std::vector<double> values, double q);

}  // namespace patchtrace::corpus
