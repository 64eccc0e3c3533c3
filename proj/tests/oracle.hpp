// Brute-force reference implementations used as test oracles. They share
// only the tokenizer with the library and favour obviousness over speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "patchtrace/corpus.hpp"
#include "patchtrace/tokenizer.hpp"

namespace oracle {

using patchtrace::corpus::CommitRecord;
using patchtrace::corpus::Dataset;
using patchtrace::text::TokenSpan;

inline std::vector<TokenSpan> toks(const std::string& raw, bool code) {
  using namespace patchtrace::text;
  return tokenize(normalize(raw, code ? FieldKind::code : FieldKind::prose));
}

inline std::vector<TokenSpan> informative(const std::vector<TokenSpan>& in) {
  std::vector<TokenSpan> out;
  for (const auto& t : in) {
    if (patchtrace::text::is_informative(t.text)) out.push_back(t);
  }
  return out;
}

inline std::set<std::string> term_set(const CommitRecord& c) {
  std::set<std::string> s;
  for (const auto& t : informative(toks(c.message, false))) s.insert(patchtrace::text::fold(t.text));
  for (const auto& t : informative(toks(c.diff, true))) s.insert(patchtrace::text::fold(t.text));
  return s;
}

struct Counts {
  double n = 0;
  std::map<std::string, double> df;
  std::map<std::string, double> nq;
  std::map<std::pair<std::string, std::string>, double> df_cve;  // (term, cve)
};

inline Counts count(const Dataset& ds) {
  Counts c;
  for (const auto& cve : ds.cves) {
    for (const auto& commit : ds.commits_of(cve.cve_id)) {
      c.n += 1;
      c.nq[cve.cve_id] += 1;
      for (const auto& t : term_set(commit)) {
        c.df[t] += 1;
        c.df_cve[{t, cve.cve_id}] += 1;
      }
    }
  }
  return c;
}

using Vec = std::map<std::string, double>;

inline Vec tfidf(const std::vector<TokenSpan>& tokens, const Counts& c) {
  Vec v;
  for (const auto& t : informative(tokens)) {
    const auto term = patchtrace::text::fold(t.text);
    auto it = c.df.find(term);
    if (it == c.df.end()) continue;
    v[term] += std::log2(c.n / it->second);
  }
  return v;
}

inline double cos(const Vec& a, const Vec& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, w] : a) {
    na += w * w;
    auto it = b.find(t);
    if (it != b.end()) dot += w * it->second;
  }
  for (const auto& [t, w] : b) nb += w * w;
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

// Informative diff tokens split every 64 surface tokens.
inline std::vector<std::vector<TokenSpan>> chunks(const std::vector<TokenSpan>& diff_tokens) {
  std::vector<std::vector<TokenSpan>> out;
  int surface = 0;
  for (const auto& t : informative(diff_tokens)) {
    if (t.origin == patchtrace::text::Origin::surface) {
      if (out.empty() || surface == 64) {
        out.emplace_back();
        surface = 0;
      }
      ++surface;
    }
    out.back().push_back(t);
  }
  return out;
}

inline std::vector<TokenSpan> top_chunk(const std::vector<TokenSpan>& cve, const std::vector<TokenSpan>& diff,
                                        const Counts& c) {
  const auto cs = chunks(diff);
  if (cs.empty()) return {};
  const auto q = tfidf(cve, c);
  std::size_t best = 0;
  for (std::size_t i = 1; i < cs.size(); ++i) {
    if (cos(tfidf(cs[i], c), q) > cos(tfidf(cs[best], c), q)) best = i;
  }
  return cs[best];
}

inline double score(const std::vector<TokenSpan>& cve, const std::vector<TokenSpan>& msg,
                    const std::vector<TokenSpan>& diff, const Counts& c) {
  const auto q = tfidf(cve, c);
  return 0.8 * cos(tfidf(msg, c), q) + 0.2 * cos(tfidf(top_chunk(cve, diff, c), c), q);
}

struct Ranked {
  std::string cve_id;
  std::vector<std::pair<double, bool>> entries;  // (score, is_patch), best first
};

inline std::vector<Ranked> rank_all(const Dataset& ds, const Counts& c) {
  std::vector<Ranked> out;
  for (const auto& cve : ds.cves) {
    const auto q = toks(cve.description, false);
    std::vector<std::tuple<double, std::string, bool>> rows;
    for (const auto& commit : ds.commits_of(cve.cve_id)) {
      rows.emplace_back(score(q, toks(commit.message, false), toks(commit.diff, true), c), commit.commit_id,
                        cve.patch_commit == commit.commit_id);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::get<1>(a) < std::get<1>(b);
    });
    Ranked r{cve.cve_id, {}};
    for (const auto& [s, id, p] : rows) r.entries.emplace_back(s, p);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- ranking metrics ----

inline double prec_at(const std::vector<bool>& labels, std::size_t k) {
  double hits = 0;
  for (std::size_t i = 0; i < labels.size() && i < k; ++i) hits += labels[i];
  return hits / static_cast<double>(k);
}

inline double recall_at(const std::vector<bool>& labels, std::size_t k) {
  double hits = 0, pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pos += labels[i];
    if (i < k) hits += labels[i];
  }
  return pos == 0 ? 0 : hits / pos;
}

inline double ap(const std::vector<bool>& labels) {
  double sum = 0, pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    pos += 1;
    sum += prec_at(labels, i + 1);
  }
  return pos == 0 ? 0 : sum / pos;
}

// Fraction of (positive, negative) pairs ordered correctly; ties count half.
inline double auc(const std::vector<std::pair<double, bool>>& pool) {
  double good = 0, pairs = 0;
  for (const auto& [sp, lp] : pool) {
    if (!lp) continue;
    for (const auto& [sn, ln] : pool) {
      if (ln) continue;
      pairs += 1;
      if (sp > sn) good += 1;
      if (sp == sn) good += 0.5;
    }
  }
  return pairs == 0 ? -1 : good / pairs;
}

// ---- highlight weights ----

struct Weighted {
  std::size_t start;
  std::size_t end;
  std::string text;
  double weight;
};

// Weight of every shared word in `field`, top k by weight then position.
// `msg` and `chunk` are the message tokens and the top diff chunk.
inline std::vector<Weighted> highlight(const Dataset& ds, const std::string& cve_id, const std::vector<TokenSpan>& cve,
                                       const std::vector<TokenSpan>& msg, const std::vector<TokenSpan>& chunk,
                                       bool diff_field, double alpha, double beta, std::size_t k, bool diff_log) {
  using patchtrace::text::fold;
  const Counts c = count(ds);
  std::set<std::string> q;
  for (const auto& t : informative(cve)) q.insert(fold(t.text));
  auto tf = [](const std::vector<TokenSpan>& ts, const std::string& term) {
    double n = 0;
    for (const auto& t : informative(ts)) n += fold(t.text) == term;
    return n;
  };
  const auto& field = diff_field ? chunk : msg;
  std::vector<std::pair<Weighted, std::size_t>> cands;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!patchtrace::text::is_informative(field[i].text)) continue;
    const auto term = fold(field[i].text);
    if (!q.count(term) || !seen.insert(term).second) continue;
    const double icve = std::max(std::log2(c.nq.at(cve_id) / c.df_cve.at({term, cve_id})) - alpha, 0.0);
    const double iall = std::max(std::log2(c.n / c.df.at(term)) - beta, 0.0);
    const double lt = 0.5 * std::log2(1 + tf(msg, term)) + 0.5 * std::log2(1 + tf(chunk, term));
    const double tfw = diff_field && !diff_log ? tf(chunk, term) : lt;
    const double w = tfw * icve * iall;
    if (w > 0) cands.push_back({{field[i].start, field[i].end, field[i].text, w}, i});
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.first.weight != b.first.weight) return a.first.weight > b.first.weight;
    return a.second < b.second;
  });
  std::vector<Weighted> out;
  for (std::size_t i = 0; i < cands.size() && i < k; ++i) out.push_back(cands[i].first);
  return out;
}

}  // namespace oracle

#include <random>

namespace oracle {

// Small random corpus over a tiny vocabulary so words repeat across commits.
inline Dataset random_dataset(std::mt19937& rng, std::size_t n_cves, std::size_t max_commits) {
  static const char* vocab[] = {"rpc",   "loop",   "parseHeader", "buf_len", "overflow", "free",
                                "index", "docs",   "fix",         "crash",   "rave",     "sessionId",
                                "null",  "bounds", "update",      "check"};
  constexpr std::size_t V = sizeof(vocab) / sizeof(vocab[0]);
  auto words = [&](std::size_t n, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += sep;
      s += vocab[rng() % V];
    }
    return s;
  };
  Dataset ds;
  for (std::size_t q = 0; q < n_cves; ++q) {
    patchtrace::corpus::CveRecord cve;
    cve.cve_id = "CVE-R-" + std::to_string(q);
    cve.description = words(3 + rng() % 6, " ");
    cve.repo = "r/r";
    const std::size_t m = 1 + rng() % max_commits;
    auto& list = ds.candidates[cve.cve_id];
    for (std::size_t i = 0; i < m; ++i) {
      CommitRecord c;
      c.commit_id = cve.cve_id + "-" + std::to_string(i);
      c.message = words(1 + rng() % 5, " ");
      c.diff = "+" + words(rng() % 12, "(x);\n+");
      c.files = {"a.c"};
      list.push_back(std::move(c));
    }
    cve.patch_commit = list[rng() % m].commit_id;
    ds.split[cve.cve_id] = patchtrace::corpus::Split::test;
    ds.cves.push_back(std::move(cve));
  }
  return ds;
}

}  // namespace oracle
