#include "patchtrace/ranker.hpp"

#include <random>

#include "doctest.h"
#include "oracle.hpp"

using namespace patchtrace;
using namespace patchtrace::rank;

namespace {

const std::string kData = PATCHTRACE_TEST_DATA;

RankedList list_of(const std::vector<std::pair<double, bool>>& rows) {
  std::vector<RankedEntry> e;
  for (std::size_t i = 0; i < rows.size(); ++i) e.push_back({"c" + std::to_string(i), rows[i].first, rows[i].second});
  return make_ranked_list("q", std::move(e));
}

std::vector<bool> labels(const RankedList& l) {
  std::vector<bool> out;
  for (const auto& e : l.entries) out.push_back(e.is_patch);
  return out;
}

}  // namespace

TEST_CASE("chunk_diff") {
  std::string s;
  for (int i = 0; i < 130; ++i) s += "w" + std::to_string(i) + " ";
  const auto t = text::tokenize(text::normalize(s, text::FieldKind::prose));
  const auto c = chunk_diff(t);
  REQUIRE(c.size() == 3);
  CHECK(c[0].tokens.size() == 64);
  CHECK(c[2].tokens.size() == 2);
  CHECK(chunk_diff({}).empty());

  SUBCASE("subwords travel with their surface token") {
    const auto t2 = text::tokenize("aB cD eF");
    const auto c2 = chunk_diff(t2, 2);
    REQUIRE(c2.size() == 2);
    CHECK(c2[0].tokens.size() == 6);
    CHECK(c2[1].tokens.front().text == "eF");
  }
}

TEST_CASE("cosine and tf-idf vectors") {
  const auto ds = corpus::load_dataset(kData + "/mini.jsonl");
  const auto idx = corpus::InvertedIndex::build(ds);
  const IdfTable idf(idx);
  CHECK(idf.idf("loop") == doctest::Approx(std::log2(12.0 / idx.df("loop"))));
  CHECK(idf.idf("never-seen") == 0.0);
  const auto a = tfidf_vector(text::tokenize("infinite loop loop"), idf);
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, {}) == 0.0);
  const auto oc = oracle::count(ds);
  const auto b = tfidf_vector(text::tokenize("rpc_handler parseHeader loop"), idf);
  CHECK(cosine(a, b) == doctest::Approx(oracle::cos(oracle::tfidf(text::tokenize("infinite loop loop"), oc),
                                                    oracle::tfidf(text::tokenize("rpc_handler parseHeader loop"), oc)))
                            .epsilon(1e-12));
}

TEST_CASE("scorer agrees with the brute-force reference") {
  for (const char* file : {"/mini.jsonl", "/highlight_corpus.jsonl", "/synthetic.jsonl"}) {
    const auto ds = corpus::load_dataset(kData + file);
    const auto ws = prepare_workspace(ds, std::nullopt, 2);
    const TfIdfScorer scorer(ws.index);
    const auto oc = oracle::count(ds);
    const auto ref = oracle::rank_all(ds, oc);
    REQUIRE(ref.size() == ws.queries.size());
    for (std::size_t q = 0; q < ws.queries.size(); ++q) {
      const auto got = rank::rank(ws.queries[q].cve, ws.queries[q].commits, scorer);
      REQUIRE(got.entries.size() == ref[q].entries.size());
      for (std::size_t i = 0; i < got.entries.size(); ++i) {
        CHECK(got.entries[i].score == doctest::Approx(ref[q].entries[i].first).epsilon(1e-9));
      }
      // Prepared state agrees with the direct call.
      for (const auto& c : ws.queries[q].commits) {
        CHECK(score_tfidf(ws.queries[q].cve, c, ws.index) ==
              scorer.score(ws.queries[q].cve.tokens, c.message_tokens, c.diff_tokens));
      }
    }
  }
}

TEST_CASE("mini fixture ranks every patch first") {
  const auto ds = corpus::load_dataset(kData + "/mini.jsonl");
  const auto ws = prepare_workspace(ds, std::nullopt);
  const TfIdfScorer scorer(ws.index);
  std::vector<RankedList> lists;
  for (const auto& q : ws.queries) lists.push_back(rank::rank(q.cve, q.commits, scorer));
  const auto m = eval_metrics(lists);
  CHECK(m.prec_at_1 == 1.0);
  CHECK(m.map == 1.0);
  REQUIRE(m.auc.has_value());
  CHECK(*m.auc == 1.0);
}

TEST_CASE("fold filter") {
  const auto ds = corpus::load_dataset(kData + "/mini.jsonl");
  const auto ws = prepare_workspace(ds, corpus::Split::train);
  REQUIRE(ws.queries.size() == 1);
  CHECK(ws.queries[0].cve.cve_id == "CVE-2020-0002");
  CHECK(ws.index.total_commits() == 12);
}

TEST_CASE("ranking metrics against brute force") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n_q = 1 + rng() % 5;
    std::vector<RankedList> lists;
    std::vector<std::pair<double, bool>> pool;
    double p1 = 0, r1 = 0, r2 = 0, r5 = 0, map = 0;
    std::size_t included = 0;
    for (std::size_t q = 0; q < n_q; ++q) {
      const std::size_t n = 1 + rng() % 6;
      std::vector<std::pair<double, bool>> rows;
      for (std::size_t i = 0; i < n; ++i) rows.emplace_back(static_cast<double>(rng() % 4) / 4.0, rng() % 3 == 0);
      auto l = list_of(rows);
      const auto lab = labels(l);
      if (std::count(lab.begin(), lab.end(), true) > 0) {
        ++included;
        p1 += oracle::prec_at(lab, 1);
        r1 += oracle::recall_at(lab, 1);
        r2 += oracle::recall_at(lab, 2);
        r5 += oracle::recall_at(lab, 5);
        map += oracle::ap(lab);
        pool.insert(pool.end(), rows.begin(), rows.end());
      }
      CHECK(precision_at(l, 3) == doctest::Approx(oracle::prec_at(lab, 3)).epsilon(1e-12));
      CHECK(average_precision(l) == doctest::Approx(oracle::ap(lab)).epsilon(1e-12));
      lists.push_back(std::move(l));
    }
    const auto m = eval_metrics(lists);
    CHECK(m.n_queries == included);
    CHECK(m.excluded_queries == n_q - included);
    if (included == 0) {
      CHECK_FALSE(m.auc.has_value());
      continue;
    }
    const double d = static_cast<double>(included);
    CHECK(std::abs(m.prec_at_1 - p1 / d) <= 1e-9);
    CHECK(std::abs(m.recall_at_1 - r1 / d) <= 1e-9);
    CHECK(std::abs(m.recall_at_2 - r2 / d) <= 1e-9);
    CHECK(std::abs(m.recall_at_5 - r5 / d) <= 1e-9);
    CHECK(std::abs(m.map - map / d) <= 1e-9);
    const double a = oracle::auc(pool);
    if (a < 0) {
      CHECK_FALSE(m.auc.has_value());
    } else {
      REQUIRE(m.auc.has_value());
      CHECK(std::abs(*m.auc - a) <= 1e-9);
    }
  }
}

TEST_CASE("ranked list order") {
  const auto l = make_ranked_list("q", {{"b", 0.5, false}, {"a", 0.5, true}, {"c", 0.9, false}});
  CHECK(l.entries[0].commit_id == "c");
  CHECK(l.entries[1].commit_id == "a");
  CHECK(l.entries[2].commit_id == "b");
}
