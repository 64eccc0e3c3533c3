#include "patchtrace/versionmatch.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "patchtrace/error.hpp"

namespace patchtrace::version {
namespace {

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

char lower(char c) noexcept { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

// -1 pre-release, 0 none, +1 post/build/other.
int suffix_class(std::string_view suffix) {
  std::size_t i = 0;
  while (i < suffix.size() && (suffix[i] == '-' || suffix[i] == '.' || suffix[i] == '_' || suffix[i] == '+')) ++i;
  if (i == suffix.size()) return 0;
  static constexpr std::array<std::string_view, 9> markers = {"preview", "alpha", "beta", "pre", "dev",
                                                              "rc",      "a",     "b",    "c"};
  for (auto m : markers) {
    if (suffix.size() - i < m.size()) continue;
    bool match = true;
    for (std::size_t k = 0; k < m.size(); ++k) match = match && lower(suffix[i + k]) == m[k];
    if (!match) continue;
    const std::size_t after = i + m.size();
    if (after == suffix.size() || is_digit(suffix[after]) || suffix[after] == '.' || suffix[after] == '-') {
      return -1;
    }
  }
  return 1;
}

// Natural order: digit runs compare numerically.
std::weak_ordering natural_compare(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      auto da = a.substr(i, ie - i), db = b.substr(j, je - j);
      while (da.size() > 1 && da[0] == '0') da.remove_prefix(1);
      while (db.size() > 1 && db[0] == '0') db.remove_prefix(1);
      if (da.size() != db.size()) return da.size() <=> db.size();
      if (auto c = da.compare(db); c != 0) return c <=> 0;
      i = ie;
      j = je;
      continue;
    }
    const char ca = lower(a[i]), cb = lower(b[j]);
    if (ca != cb) return ca <=> cb;
    ++i;
    ++j;
  }
  return (a.size() - i) <=> (b.size() - j);
}

// Longest common block in a[alo,ahi) x b[blo,bhi); earliest in a, then b.
struct Block {
  std::size_t i, j, size;
};

Block longest_match(std::string_view a, std::string_view b, std::size_t alo, std::size_t ahi, std::size_t blo,
                    std::size_t bhi) {
  Block best{alo, blo, 0};
  std::vector<std::size_t> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
  for (std::size_t i = alo; i < ahi; ++i) {
    std::fill(cur.begin(), cur.end(), 0);
    for (std::size_t j = blo; j < bhi; ++j) {
      if (a[i] != b[j]) continue;
      const std::size_t k = prev[j - blo] + 1;
      cur[j - blo + 1] = k;
      if (k > best.size) best = {i + 1 - k, j + 1 - k, k};
    }
    std::swap(prev, cur);
  }
  return best;
}

std::size_t matched_chars(std::string_view a, std::string_view b) {
  std::size_t total = 0;
  std::vector<std::array<std::size_t, 4>> todo{{0, a.size(), 0, b.size()}};
  while (!todo.empty()) {
    auto [alo, ahi, blo, bhi] = todo.back();
    todo.pop_back();
    const Block m = longest_match(a, b, alo, ahi, blo, bhi);
    if (m.size == 0) continue;
    total += m.size;
    if (alo < m.i && blo < m.j) todo.push_back({alo, m.i, blo, m.j});
    if (m.i + m.size < ahi && m.j + m.size < bhi) todo.push_back({m.i + m.size, ahi, m.j + m.size, bhi});
  }
  return total;
}

bool tag_less(const std::string& a, const std::string& b) {
  const auto c = compare(normalize_version(a), normalize_version(b));
  if (c != 0) return c < 0;
  return a < b;
}

}  // namespace

VersionKey normalize_version(std::string_view label) {
  VersionKey key;
  key.raw = std::string(label);
  std::size_t i = 0;
  while (i < label.size() && !is_digit(label[i])) ++i;
  if (i == label.size()) {
    key.prefix = key.raw;
    return key;
  }
  key.prefix = std::string(label.substr(0, i));
  while (true) {
    std::uint64_t value = 0;
    while (i < label.size() && is_digit(label[i])) {
      value = value * 10 + static_cast<std::uint64_t>(label[i] - '0');
      ++i;
    }
    key.release.push_back(value);
    if (i + 1 < label.size() && (label[i] == '.' || label[i] == '_') && is_digit(label[i + 1])) {
      ++i;
      continue;
    }
    break;
  }
  key.suffix = std::string(label.substr(i));
  return key;
}

std::weak_ordering compare(const VersionKey& a, const VersionKey& b) {
  if (a.parseable() != b.parseable()) return a.parseable() ? std::weak_ordering::less : std::weak_ordering::greater;
  if (!a.parseable()) return natural_compare(a.raw, b.raw);
  const std::size_t n = std::max(a.release.size(), b.release.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = k < a.release.size() ? a.release[k] : 0;
    const auto y = k < b.release.size() ? b.release[k] : 0;
    if (x != y) return x <=> y;
  }
  const int ca = suffix_class(a.suffix), cb = suffix_class(b.suffix);
  if (ca != cb) return ca <=> cb;
  return natural_compare(a.suffix, b.suffix);
}

double similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (b < a) std::swap(a, b);
  return 2.0 * static_cast<double>(matched_chars(a, b)) / static_cast<double>(a.size() + b.size());
}

TagMatch match_tag(std::string_view label, const std::vector<std::string>& repo_tags) {
  if (repo_tags.empty()) throw Error("match_tag: repository has no tags");
  const TagMatch* best = nullptr;
  std::vector<TagMatch> scored;
  scored.reserve(repo_tags.size());
  for (const auto& t : repo_tags) scored.push_back({t, similarity(label, t)});
  for (const auto& m : scored) {
    if (best == nullptr || m.similarity > best->similarity ||
        (m.similarity == best->similarity && tag_less(m.tag, best->tag))) {
      best = &m;
    }
  }
  return *best;
}

std::optional<TagMatch> resolve_tag(std::string_view label, const std::vector<std::string>& repo_tags,
                                    double threshold) {
  if (repo_tags.empty()) return std::nullopt;
  auto m = match_tag(label, repo_tags);
  if (m.similarity < threshold) return std::nullopt;
  return m;
}

std::optional<std::string> adjacent_version(std::string_view tag, const std::vector<std::string>& repo_tags,
                                            Direction direction) {
  std::vector<std::string> sorted = repo_tags;
  std::sort(sorted.begin(), sorted.end(), tag_less);
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  auto it = std::find(sorted.begin(), sorted.end(), tag);
  if (it == sorted.end()) return std::nullopt;
  if (direction == Direction::next) {
    if (std::next(it) == sorted.end()) return std::nullopt;
    return *std::next(it);
  }
  if (it == sorted.begin()) return std::nullopt;
  return *std::prev(it);
}

TagTimeline::TagTimeline(std::vector<TagRecord> tags) : tags_(std::move(tags)) {
  std::sort(tags_.begin(), tags_.end(), [](const TagRecord& a, const TagRecord& b) {
    const auto c = compare(normalize_version(a.tag), normalize_version(b.tag));
    if (c != 0) return c < 0;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.tag < b.tag;
  });
  for (std::size_t i = 1; i < tags_.size(); ++i) {
    if (tags_[i].tag == tags_[i - 1].tag) throw ValidationError("duplicate tag " + tags_[i].tag);
  }
  std::set<std::string> seen;
  for (auto& t : tags_) {
    if (std::find(t.ancestors.begin(), t.ancestors.end(), t.commit_id) == t.ancestors.end()) {
      t.ancestors.push_back(t.commit_id);
    }
    reachable_.emplace_back(t.ancestors.begin(), t.ancestors.end());
    auto& seg = segments_.emplace_back();
    for (const auto& c : t.ancestors) {
      if (seen.insert(c).second) seg.push_back(c);
    }
  }
}

std::vector<std::string> TagTimeline::tag_names() const {
  std::vector<std::string> names;
  for (const auto& t : tags_) names.push_back(t.tag);
  return names;
}

std::optional<std::size_t> TagTimeline::position(std::string_view tag) const {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (tags_[i].tag == tag) return i;
  }
  return std::nullopt;
}

std::vector<std::string> TagTimeline::commits() const {
  std::vector<std::string> all;
  for (const auto& s : segments_) all.insert(all.end(), s.begin(), s.end());
  return all;
}

bool TagTimeline::contains(std::size_t tag_index, const std::string& commit_id) const {
  return reachable_.at(tag_index).contains(commit_id);
}

std::map<std::string, TagTimeline> parse_timelines(std::istream& in) {
  using nlohmann::json;
  std::map<std::string, std::vector<TagRecord>> by_repo;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TagRecord rec;
    try {
      const json j = json::parse(line);
      rec.repo = j.at("repo").get<std::string>();
      rec.tag = j.at("tag").get<std::string>();
      rec.commit_id = j.at("commit_id").get<std::string>();
      rec.timestamp = j.at("timestamp").get<std::int64_t>();
      rec.ancestors = j.at("ancestors").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    by_repo[rec.repo].push_back(std::move(rec));
  }
  std::map<std::string, TagTimeline> out;
  for (auto& [repo, tags] : by_repo) out.emplace(repo, TagTimeline(std::move(tags)));
  return out;
}

std::map<std::string, TagTimeline> load_timelines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open timeline file: " + path);
  return parse_timelines(in);
}

std::vector<std::string> candidate_window(const TagTimeline& timeline, std::string_view anchor_tag,
                                          std::size_t radius) {
  const auto pos = timeline.position(anchor_tag);
  if (!pos) throw Error("unknown tag " + std::string(anchor_tag));
  const std::size_t n = timeline.tags().size();
  const std::size_t first = *pos >= radius ? *pos - radius : 0;
  const std::size_t last = std::min(n - 1, *pos + radius + 1);
  std::vector<std::string> out;
  for (std::size_t i = first; i <= last; ++i) {
    const auto& seg = timeline.segment(i);
    out.insert(out.end(), seg.begin(), seg.end());
  }
  return out;
}

TrueTagWindow true_tag_window(const TagTimeline& timeline, const std::string& patch_commit) {
  const auto& tags = timeline.tags();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!timeline.contains(i, patch_commit)) continue;
    TrueTagWindow w;
    w.fixed_tag = tags[i].tag;
    for (const auto& c : tags[i].ancestors) {
      if (i == 0 || !timeline.contains(i - 1, c)) w.commits.push_back(c);
    }
    if (i > 0) w.last_vulnerable_tag = tags[i - 1].tag;
    return w;
  }
  throw Error("commit " + patch_commit + " is not contained in any tag");
}

std::vector<RecallRow> recall_table(const corpus::Dataset& dataset,
                                    const std::map<std::string, TagTimeline>& timelines,
                                    const std::vector<std::size_t>& radii, double threshold) {
  struct Case {
    const TagTimeline* timeline;
    std::optional<std::string> anchor;
    std::string patch;
  };
  std::vector<Case> cases;
  for (const auto& cve : dataset.cves) {
    const auto& label = cve.affected_tag ? cve.affected_tag : cve.fixed_tag;
    if (!label || !cve.patch_commit) continue;
    auto it = timelines.find(cve.repo);
    if (it == timelines.end()) continue;
    auto match = resolve_tag(*label, it->second.tag_names(), threshold);
    cases.push_back({&it->second, match ? std::optional(match->tag) : std::nullopt, *cve.patch_commit});
  }
  std::vector<RecallRow> rows;
  for (auto r : radii) {
    RecallRow row{r, 0, cases.size(), 0.0};
    for (const auto& c : cases) {
      if (!c.anchor) continue;
      const auto window = candidate_window(*c.timeline, *c.anchor, r);
      row.hits += std::find(window.begin(), window.end(), c.patch) != window.end();
    }
    row.recall_percent = row.total == 0 ? 0.0 : 100.0 * static_cast<double>(row.hits) / static_cast<double>(row.total);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace patchtrace::version
