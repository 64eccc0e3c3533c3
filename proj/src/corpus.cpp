#include "patchtrace/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "patchtrace/error.hpp"
#include "patchtrace/tokenizer.hpp"

namespace patchtrace::corpus {

using nlohmann::json;

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "test";
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

const CveRecord* Dataset::find(std::string_view cve_id) const {
  for (const auto& c : cves) {
    if (c.cve_id == cve_id) return &c;
  }
  return nullptr;
}

const std::vector<CommitRecord>& Dataset::commits_of(const std::string& cve_id) const {
  static const std::vector<CommitRecord> empty;
  auto it = candidates.find(cve_id);
  return it == candidates.end() ? empty : it->second;
}

std::size_t Dataset::commit_count() const {
  std::size_t n = 0;
  for (const auto& [id, list] : candidates) n += list.size();
  return n;
}

namespace {

std::string require_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ParseError(line, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string or null");
  return it->get<std::string>();
}

}  // namespace

Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::vector<std::pair<std::string, std::size_t>> commit_owner_lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record must be an object");
    const std::string kind = require_string(j, "kind", lineno);
    const std::string cve_id = require_string(j, "cve_id", lineno);
    if (kind == "cve") {
      CveRecord rec;
      rec.cve_id = cve_id;
      rec.description = require_string(j, "description", lineno);
      rec.repo = require_string(j, "repo", lineno);
      rec.patch_commit = optional_string(j, "patch_commit", lineno);
      rec.affected_tag = optional_string(j, "affected_tag", lineno);
      rec.fixed_tag = optional_string(j, "fixed_tag", lineno);
      const std::string split = require_string(j, "split", lineno);
      auto parsed = parse_split(split);
      if (!parsed) throw ParseError(lineno, "unknown split '" + split + "'");
      if (ds.split.contains(cve_id)) throw ValidationError("duplicate cve_id " + cve_id);
      ds.split.emplace(cve_id, *parsed);
      ds.cves.push_back(std::move(rec));
    } else if (kind == "commit") {
      CommitRecord rec;
      rec.commit_id = require_string(j, "commit_id", lineno);
      rec.message = require_string(j, "message", lineno);
      rec.diff = require_string(j, "diff", lineno);
      auto files = j.find("files");
      if (files == j.end() || !files->is_array()) throw ParseError(lineno, "missing array field 'files'");
      for (const auto& f : *files) {
        if (!f.is_string()) throw ParseError(lineno, "'files' entries must be strings");
        rec.files.push_back(f.get<std::string>());
      }
      auto ts = j.find("timestamp");
      if (ts == j.end() || !ts->is_number_integer()) throw ParseError(lineno, "missing integer field 'timestamp'");
      rec.timestamp = ts->get<std::int64_t>();
      commit_owner_lines.emplace_back(cve_id, lineno);
      ds.candidates[cve_id].push_back(std::move(rec));
    } else {
      throw ParseError(lineno, "unknown kind '" + kind + "'");
    }
  }
  for (const auto& [owner, at] : commit_owner_lines) {
    if (!ds.split.contains(owner)) {
      throw ValidationError("commit on line " + std::to_string(at) + " references unknown CVE " + owner);
    }
  }
  validate(ds);
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path);
  return parse_dataset(in);
}

void validate(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& cve : ds.cves) {
    if (!ids.insert(cve.cve_id).second) throw ValidationError("duplicate cve_id " + cve.cve_id);
    if (cve.description.empty()) throw ValidationError(cve.cve_id + ": empty description");
    if (!ds.split.contains(cve.cve_id)) throw ValidationError(cve.cve_id + ": no split assigned");
    const auto& commits = ds.commits_of(cve.cve_id);
    std::set<std::string> seen;
    for (const auto& c : commits) {
      if (!seen.insert(c.commit_id).second) {
        throw ValidationError(cve.cve_id + ": duplicate candidate commit " + c.commit_id);
      }
      if (c.message.empty() && c.diff.empty()) {
        throw ValidationError(cve.cve_id + ": commit " + c.commit_id + " has empty message and diff");
      }
    }
    if (cve.patch_commit && !seen.contains(*cve.patch_commit)) {
      throw ValidationError(cve.cve_id + ": patch commit " + *cve.patch_commit + " is not among its candidates");
    }
  }
  if (ds.split.size() != ds.cves.size()) throw ValidationError("split map does not match CVE list");
  for (const auto& [owner, list] : ds.candidates) {
    if (!ids.contains(owner)) throw ValidationError("candidates reference unknown CVE " + owner);
  }
}

std::string serialize(const Dataset& ds) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  std::string out;
  for (const auto& cve : ds.cves) {
    json j = {{"kind", "cve"},
              {"cve_id", cve.cve_id},
              {"description", cve.description},
              {"repo", cve.repo},
              {"patch_commit", opt(cve.patch_commit)},
              {"affected_tag", opt(cve.affected_tag)},
              {"fixed_tag", opt(cve.fixed_tag)},
              {"split", std::string(to_string(ds.split.at(cve.cve_id)))}};
    out += j.dump() + "\n";
    for (const auto& c : ds.commits_of(cve.cve_id)) {
      json k = {{"kind", "commit"},   {"cve_id", cve.cve_id}, {"commit_id", c.commit_id},
                {"message", c.message}, {"diff", c.diff},       {"files", c.files},
                {"timestamp", c.timestamp}};
      out += k.dump() + "\n";
    }
  }
  return out;
}

std::vector<CommitLink> extract_commit_links(std::string_view text) {
  static const std::regex pattern(
      R"(https?://(?:www\.)?github\.com/([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+)/commit/([0-9a-fA-F]{7,40})(?![0-9a-zA-Z]))");
  std::vector<CommitLink> links;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    links.push_back({m[1].str() + "/" + m[2].str(), m[3].str()});
  }
  return links;
}

std::vector<std::string> commit_terms(const CommitRecord& commit) {
  std::vector<std::string> terms;
  auto collect = [&terms](std::string_view raw, text::FieldKind kind) {
    for (const auto& t : text::tokenize(text::normalize(raw, kind))) {
      if (text::is_informative(t.text)) terms.push_back(text::fold(t.text));
    }
  };
  collect(commit.message, text::FieldKind::prose);
  collect(commit.diff, text::FieldKind::code);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

InvertedIndex InvertedIndex::build(const Dataset& dataset) {
  InvertedIndex idx;
  for (const auto& cve : dataset.cves) {
    auto& per = idx.per_cve_[cve.cve_id];
    for (const auto& commit : dataset.commits_of(cve.cve_id)) {
      ++per.commits;
      ++idx.total_;
      for (auto& term : commit_terms(commit)) {
        ++per.df[term];
        ++idx.df_[term];
      }
    }
  }
  return idx;
}

std::size_t InvertedIndex::df(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

std::size_t InvertedIndex::cve_commits(const std::string& cve_id) const {
  auto it = per_cve_.find(cve_id);
  return it == per_cve_.end() ? 0 : it->second.commits;
}

std::size_t InvertedIndex::df_cve(const std::string& term, const std::string& cve_id) const {
  auto it = per_cve_.find(cve_id);
  if (it == per_cve_.end()) return 0;
  auto jt = it->second.df.find(term);
  return jt == it->second.df.end() ? 0 : jt->second;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

CorpusStats compute_stats(const Dataset& dataset) {
  auto count = [](std::string_view raw, text::FieldKind kind) {
    return static_cast<double>(text::surface_count(text::tokenize(text::normalize(raw, kind))));
  };
  CorpusStats st;
  double desc_total = 0, msg_total = 0, diff_total = 0;
  std::vector<double> diff_counts;
  for (const auto& cve : dataset.cves) {
    desc_total += count(cve.description, text::FieldKind::prose);
    for (const auto& c : dataset.commits_of(cve.cve_id)) {
      msg_total += count(c.message, text::FieldKind::prose);
      const double d = count(c.diff, text::FieldKind::code);
      diff_total += d;
      diff_counts.push_back(d);
      if (cve.patch_commit && *cve.patch_commit == c.commit_id) {
        ++st.n_positive;
      } else {
        ++st.n_negative;
      }
    }
  }
  st.n_commits = diff_counts.size();
  if (!dataset.cves.empty()) st.avg_tokens_cve_desc = desc_total / static_cast<double>(dataset.cves.size());
  if (st.n_commits > 0) {
    st.avg_tokens_msg = msg_total / static_cast<double>(st.n_commits);
    st.avg_tokens_diff = diff_total / static_cast<double>(st.n_commits);
  }
  st.median_tokens_diff = quantile(diff_counts, 0.5);
  st.q3_tokens_diff = quantile(diff_counts, 0.75);
  const std::size_t g = std::gcd(st.n_positive, st.n_negative);
  st.pos_neg_ratio = g == 0 ? std::pair{st.n_positive, st.n_negative}
                            : std::pair{st.n_positive / g, st.n_negative / g};
  return st;
}

}  // namespace patchtrace::corpus
