#include "patchtrace/ranker.hpp"

#include <algorithm>
#include <cmath>

#include "patchtrace/parallel.hpp"

namespace patchtrace::rank {

std::vector<Chunk> chunk_diff(std::span<const TokenSpan> tokens, std::size_t chunk_size) {
  std::vector<Chunk> chunks;
  std::size_t begin = 0;
  std::size_t surface = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].origin != text::Origin::surface) continue;
    if (surface == chunk_size) {
      chunks.push_back({chunks.size(), tokens.subspan(begin, i - begin)});
      begin = i;
      surface = 0;
    }
    ++surface;
  }
  if (begin < tokens.size()) chunks.push_back({chunks.size(), tokens.subspan(begin)});
  return chunks;
}

std::vector<TokenSpan> informative_only(std::span<const TokenSpan> tokens) {
  std::vector<TokenSpan> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (text::is_informative(t.text)) out.push_back(t);
  }
  return out;
}

IdfTable::IdfTable(const corpus::InvertedIndex& index) {
  const double n = static_cast<double>(index.total_commits());
  idf_.reserve(index.global_df().size());
  for (const auto& [term, df] : index.global_df()) idf_.emplace(term, std::log2(n / static_cast<double>(df)));
}

double IdfTable::idf(const std::string& term) const {
  auto it = idf_.find(term);
  return it == idf_.end() ? 0.0 : it->second;
}

TermVector tfidf_vector(std::span<const TokenSpan> tokens, const IdfTable& idf) {
  std::vector<std::string> terms;
  terms.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (text::is_informative(t.text)) terms.push_back(text::fold(t.text));
  }
  std::sort(terms.begin(), terms.end());
  TermVector out;
  for (std::size_t i = 0; i < terms.size();) {
    std::size_t j = i;
    while (j < terms.size() && terms[j] == terms[i]) ++j;
    const double w = static_cast<double>(j - i) * idf.idf(terms[i]);
    if (w != 0.0) out.emplace_back(std::move(terms[i]), w);
    i = j;
  }
  return out;
}

double cosine(const TermVector& a, const TermVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, w] : a) na += w * w;
  for (const auto& [t, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      dot += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::optional<std::size_t> select_top_chunk(std::span<const Chunk> chunks, std::span<const TokenSpan> cve_tokens,
                                            const IdfTable& idf) {
  if (chunks.empty()) return std::nullopt;
  const TermVector query = tfidf_vector(cve_tokens, idf);
  std::size_t best = 0;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const double sim = cosine(tfidf_vector(chunks[i].tokens, idf), query);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

TfIdfScorer::TfIdfScorer(const corpus::InvertedIndex& index, double message_weight, double diff_weight)
    : idf_(index), message_weight_(message_weight), diff_weight_(diff_weight) {}

double TfIdfScorer::score(std::span<const TokenSpan> cve, std::span<const TokenSpan> message,
                          std::span<const TokenSpan> diff) const {
  const TermVector query = tfidf_vector(cve, idf_);
  double s = message_weight_ * cosine(tfidf_vector(message, idf_), query);
  // The top chunk is the one with the highest cosine, so its cosine is the
  // max. Chunks are cut on the full list at every kChunkTokens-th
  // informative surface token; uninformative tokens add nothing to a vector.
  double best = -1.0;
  std::size_t begin = 0, surface = 0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i].origin != text::Origin::surface || !text::is_informative(diff[i].text)) continue;
    if (surface == kChunkTokens) {
      best = std::max(best, cosine(tfidf_vector(diff.subspan(begin, i - begin), idf_), query));
      begin = i;
      surface = 0;
    }
    ++surface;
  }
  if (surface > 0) best = std::max(best, cosine(tfidf_vector(diff.subspan(begin), idf_), query));
  if (best >= 0.0) s += diff_weight_ * best;
  return s;
}

PreparedCve prepare_cve(const corpus::CveRecord& cve) {
  PreparedCve p;
  p.cve_id = cve.cve_id;
  p.description = text::normalize_mapped(cve.description, text::FieldKind::prose);
  p.tokens = text::tokenize(p.description.text);
  return p;
}

PreparedCommit prepare_commit(const corpus::CommitRecord& commit, bool is_patch, const PreparedCve& cve,
                              const IdfTable& idf) {
  PreparedCommit p;
  p.commit_id = commit.commit_id;
  p.is_patch = is_patch;
  p.message = text::normalize_mapped(commit.message, text::FieldKind::prose);
  p.message_tokens = text::tokenize(p.message.text);
  p.diff = text::normalize_mapped(commit.diff, text::FieldKind::code);
  p.diff_tokens = text::tokenize(p.diff.text);
  p.diff_terms = informative_only(p.diff_tokens);
  const auto chunks = chunk_diff(p.diff_terms);
  p.top_chunk = select_top_chunk(chunks, cve.tokens, idf);
  if (p.top_chunk) {
    const auto& c = chunks[*p.top_chunk];
    p.chunk_begin = static_cast<std::size_t>(c.tokens.data() - p.diff_terms.data());
    p.chunk_end = p.chunk_begin + c.tokens.size();
  }
  return p;
}

double score_tfidf(const PreparedCve& cve, const PreparedCommit& commit, const corpus::InvertedIndex& index) {
  return TfIdfScorer(index).score(cve.tokens, commit.message_tokens, commit.diff_tokens);
}

RankedList make_ranked_list(std::string cve_id, std::vector<RankedEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.commit_id < b.commit_id;
  });
  return {std::move(cve_id), std::move(entries)};
}

RankedList rank(const PreparedCve& cve, std::span<const PreparedCommit> candidates, const Scorer& scorer) {
  std::vector<RankedEntry> entries;
  entries.reserve(candidates.size());
  for (const auto& c : candidates) {
    entries.push_back({c.commit_id, scorer.score(cve.tokens, c.message_tokens, c.diff_tokens), c.is_patch});
  }
  return make_ranked_list(cve.cve_id, std::move(entries));
}

std::size_t positives(const RankedList& list) {
  return static_cast<std::size_t>(
      std::count_if(list.entries.begin(), list.entries.end(), [](const RankedEntry& e) { return e.is_patch; }));
}

namespace {
std::size_t hits_at(const RankedList& list, std::size_t k) {
  const std::size_t n = std::min(k, list.entries.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += list.entries[i].is_patch;
  return hits;
}
}  // namespace

double precision_at(const RankedList& list, std::size_t k) {
  return k == 0 ? 0.0 : static_cast<double>(hits_at(list, k)) / static_cast<double>(k);
}

double recall_at(const RankedList& list, std::size_t k) {
  const std::size_t pos = positives(list);
  return pos == 0 ? 0.0 : static_cast<double>(hits_at(list, k)) / static_cast<double>(pos);
}

double average_precision(const RankedList& list) {
  std::size_t hits = 0;
  double sum = 0;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (!list.entries[i].is_patch) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

std::optional<double> pooled_auc(std::vector<std::pair<double, bool>> scored) {
  std::size_t npos = 0;
  for (const auto& s : scored) npos += s.second;
  const std::size_t nneg = scored.size() - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of midranks of positives.
  double rank_sum = 0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    std::size_t pos_in_tie = 0;
    while (j < scored.size() && scored[j].first == scored[i].first) pos_in_tie += scored[j++].second;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += midrank * static_cast<double>(pos_in_tie);
    i = j;
  }
  const double p = static_cast<double>(npos), n = static_cast<double>(nneg);
  return (rank_sum - p * (p + 1) / 2.0) / (p * n);
}

MetricsReport eval_metrics(std::span<const RankedList> lists) {
  MetricsReport r;
  std::vector<std::pair<double, bool>> pool;
  for (const auto& list : lists) {
    if (positives(list) == 0) {
      ++r.excluded_queries;
      continue;
    }
    ++r.n_queries;
    r.prec_at_1 += precision_at(list, 1);
    r.recall_at_1 += recall_at(list, 1);
    r.recall_at_2 += recall_at(list, 2);
    r.recall_at_5 += recall_at(list, 5);
    r.map += average_precision(list);
    for (const auto& e : list.entries) pool.emplace_back(e.score, e.is_patch);
  }
  if (r.n_queries > 0) {
    const double n = static_cast<double>(r.n_queries);
    r.prec_at_1 /= n;
    r.recall_at_1 /= n;
    r.recall_at_2 /= n;
    r.recall_at_5 /= n;
    r.map /= n;
  }
  r.auc = pooled_auc(std::move(pool));
  return r;
}

Workspace prepare_workspace(const corpus::Dataset& dataset, std::optional<corpus::Split> fold, std::size_t jobs) {
  Workspace ws;
  ws.index = corpus::InvertedIndex::build(dataset);
  ws.idf = IdfTable(ws.index);
  std::vector<const corpus::CveRecord*> selected;
  for (const auto& cve : dataset.cves) {
    const auto split = dataset.split.at(cve.cve_id);
    if (!fold || split == *fold) selected.push_back(&cve);
  }
  ws.queries.resize(selected.size());
  parallel_for(selected.size(), jobs, [&](std::size_t i) {
    const auto& cve = *selected[i];
    auto& q = ws.queries[i];
    q.split = dataset.split.at(cve.cve_id);
    q.cve = prepare_cve(cve);
    for (const auto& c : dataset.commits_of(cve.cve_id)) {
      const bool patch = cve.patch_commit && *cve.patch_commit == c.commit_id;
      q.commits.push_back(prepare_commit(c, patch, q.cve, ws.idf));
    }
  });
  return ws;
}

}  // namespace patchtrace::rank
