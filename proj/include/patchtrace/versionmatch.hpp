#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "patchtrace/corpus.hpp"

namespace patchtrace::version {

/// Parsed version label. "v2.4.0-rc1" -> prefix "v", release {2,4,0},
/// suffix "-rc1". Labels without digits are unparseable and sort last.
struct VersionKey {
  std::vector<std::uint64_t> release;
  std::string prefix;
  std::string suffix;
  std::string raw;

  bool parseable() const noexcept { return !release.empty(); }
};

VersionKey normalize_version(std::string_view label);

/// Orders release numbers (trailing zeros ignored), then suffix: pre-release
/// markers (a, alpha, b, beta, c, rc, pre, preview, dev) before no suffix,
/// anything else after. Prefix and raw text do not participate.
std::weak_ordering compare(const VersionKey& a, const VersionKey& b);

/// Ratcliff/Obershelp ratio 2*M/(|a|+|b|), M = total size of matching
/// blocks. Computed on the lexicographically smaller string first so the
/// result is symmetric. Two empty strings give 1.0.
double similarity(std::string_view a, std::string_view b);

struct TagMatch {
  std::string tag;
  double similarity = 0;
};

/// Best-scoring tag; ties go to the lowest version, then lexicographic.
/// Throws Error on an empty tag list.
TagMatch match_tag(std::string_view label, const std::vector<std::string>& repo_tags);

/// match_tag gated by a minimum similarity.
std::optional<TagMatch> resolve_tag(std::string_view label, const std::vector<std::string>& repo_tags,
                                    double threshold = 0.8);

enum class Direction { next, prev };

/// Neighbour of `tag` under version order (ties by name).
std::optional<std::string> adjacent_version(std::string_view tag, const std::vector<std::string>& repo_tags,
                                            Direction direction);

struct TagRecord {
  std::string repo;
  std::string tag;
  std::string commit_id;
  std::int64_t timestamp = 0;
  std::vector<std::string> ancestors;  // includes commit_id itself
};

/// Tags in version order (ties by timestamp, then name). Segment i holds the
/// commits reachable from tag i but not from tag i-1, in export order.
class TagTimeline {
 public:
  explicit TagTimeline(std::vector<TagRecord> tags);

  const std::vector<TagRecord>& tags() const noexcept { return tags_; }
  std::vector<std::string> tag_names() const;
  std::optional<std::size_t> position(std::string_view tag) const;

  const std::vector<std::string>& segment(std::size_t i) const { return segments_.at(i); }
  /// Concatenation of every segment.
  std::vector<std::string> commits() const;
  bool contains(std::size_t tag_index, const std::string& commit_id) const;

 private:
  std::vector<TagRecord> tags_;
  std::vector<std::set<std::string>> reachable_;
  std::vector<std::vector<std::string>> segments_;
};

/// Reads the timeline export: one record per line with fields repo, tag,
/// commit_id, timestamp, ancestors. Returns one timeline per repo.
std::map<std::string, TagTimeline> load_timelines(const std::string& path);
std::map<std::string, TagTimeline> parse_timelines(std::istream& in);

/// Commits after tag (anchor - radius - 1) up to and including tag
/// (anchor + radius + 1), clipped to the timeline. Contiguous, in timeline
/// order. Throws Error for an unknown tag.
std::vector<std::string> candidate_window(const TagTimeline& timeline, std::string_view anchor_tag,
                                          std::size_t radius);

struct TrueTagWindow {
  std::string fixed_tag;
  std::optional<std::string> last_vulnerable_tag;
  std::vector<std::string> commits;
};

/// Earliest tag containing the patch, its predecessor, and the commits
/// between them. Throws Error when no tag contains the patch.
TrueTagWindow true_tag_window(const TagTimeline& timeline, const std::string& patch_commit);

struct RecallRow {
  std::size_t radius = 0;
  std::size_t hits = 0;
  std::size_t total = 0;
  double recall_percent = 0;
};

/// CVEs need a patch commit, a labelled tag (affected_tag, else fixed_tag)
/// and a timeline for their repo; others are skipped. Labels are mapped to
/// repository tags with resolve_tag; unresolved labels count as misses.
std::vector<RecallRow> recall_table(const corpus::Dataset& dataset,
                                    const std::map<std::string, TagTimeline>& timelines,
                                    const std::vector<std::size_t>& radii, double threshold = 0.8);

}  // namespace patchtrace::version
