#include "patchtrace/faithfulness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "patchtrace/error.hpp"
#include "patchtrace/parallel.hpp"

namespace patchtrace::faith {

std::string_view to_string(Mode m) noexcept {
  return m == Mode::sufficiency_keep_only ? "sufficiency" : "comprehensiveness";
}

std::vector<TokenSpan> mask_field(std::span<const TokenSpan> tokens, std::string_view text, const Highlight& h,
                                  Mode mode) {
  for (const auto& it : h.items) {
    const auto& s = it.span;
    if (s.start >= s.end || s.end > text.size() || text.substr(s.start, s.end - s.start) != s.text) {
      throw Error("highlight span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                  ") does not match the " + std::string(highlight::to_string(h.field)) + " field");
    }
  }
  std::vector<TokenSpan> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    bool inside = false;
    for (const auto& it : h.items) {
      if (it.span.start <= t.start && t.end <= it.span.end) {
        inside = true;
        break;
      }
    }
    if (inside == (mode == Mode::sufficiency_keep_only)) out.push_back(t);
  }
  return out;
}

std::string_view field_text(const rank::PreparedCommit& commit, Field field) {
  return field == Field::message ? std::string_view(commit.message.text) : std::string_view(commit.diff.text);
}

double masked_score(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, const Highlight& h, Mode mode,
                    const rank::Scorer& scorer) {
  if (h.field == Field::message) {
    const auto msg = mask_field(commit.message_tokens, commit.message.text, h, mode);
    return scorer.score(cve.tokens, msg, commit.diff_tokens);
  }
  const auto diff = mask_field(commit.diff_tokens, commit.diff.text, h, mode);
  return scorer.score(cve.tokens, commit.message_tokens, diff);
}

double prec_at_1(const rank::RankedList& list) { return rank::precision_at(list, 1); }

std::vector<double> per_query_faithfulness(std::span<const rank::RankedList> original,
                                           std::span<const rank::RankedList> rescored, const QueryMetric& metric) {
  if (original.size() != rescored.size()) throw Error("faithfulness: query sets differ in size");
  auto pairs = [](const rank::RankedList& l) {
    std::set<std::string> s;
    for (const auto& e : l.entries) s.insert(e.commit_id);
    return s;
  };
  std::vector<double> out;
  out.reserve(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original[i].cve_id != rescored[i].cve_id || pairs(original[i]) != pairs(rescored[i])) {
      throw Error("faithfulness: mismatched (cve, commit) pairs for " + original[i].cve_id);
    }
    out.push_back(std::fabs(metric(original[i]) - metric(rescored[i])));
  }
  return out;
}

double faithfulness_metric(std::span<const rank::RankedList> original, std::span<const rank::RankedList> rescored,
                           const QueryMetric& metric) {
  const auto v = per_query_faithfulness(original, rescored, metric);
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired_t_test: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw Error("paired_t_test: need at least two pairs");
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) {
    if (mean == 0.0) return {0.0, 1.0};
    return {mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), 0.0};
  }
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  const double dof = static_cast<double>(n - 1);
  return {t, incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))};
}

Highlight tfidf_surface(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, Field field, std::size_t k,
                        const highlight::HighlightParams& params, const corpus::InvertedIndex& index) {
  auto p = params;
  p.k = k;
  const auto both = highlight::highlight(cve, commit, p, index);
  if (field == Field::message) {
    return highlight::to_surface(both.message, commit.message_tokens, commit.message.text);
  }
  return highlight::to_surface(both.diff, commit.top_chunk_tokens(), commit.diff.text);
}


BudgetPair budget_match(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, Field field, std::size_t k,
                        const highlight::HighlightParams& params, const corpus::InvertedIndex& index,
                        const rank::Scorer& scorer, const lime::LimeConfig& config) {
  BudgetPair pair;
  pair.tfidf = tfidf_surface(cve, commit, field, k, params, index);
  pair.lime =
      lime::explain(cve, commit, field, pair.tfidf.items.size(), scorer, config, lime::Selection::exact).highlight;
  return pair;
}

std::vector<CurvePoint> curve(std::span<const Example> positives, std::span<const std::size_t> ks,
                              const CurveSettings& settings, const rank::Scorer& scorer,
                              const corpus::InvertedIndex& index) {
  if (settings.method == Method::none) throw Error("curve: method 'none' has no highlights");
  std::vector<CurvePoint> points;
  for (std::size_t k : ks) {
    std::vector<double> proba(positives.size()), tokens(positives.size());
    parallel_for(positives.size(), settings.jobs, [&](std::size_t i) {
      const auto& ex = positives[i];
      Highlight h;
      if (settings.method == Method::tfidf) {
        h = tfidf_surface(*ex.cve, *ex.commit, settings.field, k, settings.params, index);
      } else {
        h = lime::explain(*ex.cve, *ex.commit, settings.field, k, scorer,
                          lime::for_example(settings.lime, ex.cve->cve_id, ex.commit->commit_id, settings.field),
                          lime::Selection::exact)
                .highlight;
      }
      tokens[i] = static_cast<double>(h.items.size());
      proba[i] = masked_score(*ex.cve, *ex.commit, h, settings.mode, scorer);
    });
    CurvePoint pt{k, 0, 0};
    for (std::size_t i = 0; i < positives.size(); ++i) {
      pt.mean_tokens += tokens[i];
      pt.mean_proba += proba[i];
    }
    if (!positives.empty()) {
      pt.mean_tokens /= static_cast<double>(positives.size());
      pt.mean_proba /= static_cast<double>(positives.size());
    }
    points.push_back(pt);
  }
  return points;
}

std::vector<ReportRow> evaluate(const rank::Workspace& ws, const rank::Scorer& scorer, const EvalSettings& settings,
                                const std::string& fold) {
  for (auto m : settings.methods) {
    if (m == Method::none) throw Error("faithfulness: method 'none' has no highlights");
  }
  const bool want_lime =
      std::find(settings.methods.begin(), settings.methods.end(), Method::lime) != settings.methods.end();

  // Queries with a positive only; the metric is undefined otherwise.
  std::vector<const rank::PreparedQuery*> queries;
  for (const auto& q : ws.queries) {
    if (std::any_of(q.commits.begin(), q.commits.end(), [](const auto& c) { return c.is_patch; })) {
      queries.push_back(&q);
    }
  }

  struct Scores {
    double original = 0;
    // [method][field][mode]
    double masked[2][2][2] = {};
    std::size_t tokens[2][2] = {};
  };
  std::vector<std::vector<Scores>> scores(queries.size());
  parallel_for(queries.size(), settings.jobs, [&](std::size_t qi) {
    const auto& q = *queries[qi];
    auto& out = scores[qi];
    out.resize(q.commits.size());
    for (std::size_t ci = 0; ci < q.commits.size(); ++ci) {
      const auto& c = q.commits[ci];
      out[ci].original = scorer.score(q.cve.tokens, c.message_tokens, c.diff_tokens);
      for (auto field : settings.fields) {
        const int f = field == Field::message ? 0 : 1;
        Highlight per_method[2];
        per_method[0] = tfidf_surface(q.cve, c, field, settings.k, settings.params, ws.index);
        if (want_lime) {
          per_method[1] = lime::explain(q.cve, c, field, per_method[0].items.size(), scorer,
                                        lime::for_example(settings.lime, q.cve.cve_id, c.commit_id, field),
                                        lime::Selection::exact)
                              .highlight;
        }
        for (int m = 0; m < 2; ++m) {
          out[ci].tokens[m][f] = per_method[m].items.size();
          out[ci].masked[m][f][0] = masked_score(q.cve, c, per_method[m], Mode::sufficiency_keep_only, scorer);
          out[ci].masked[m][f][1] = masked_score(q.cve, c, per_method[m], Mode::comprehensiveness_remove, scorer);
        }
      }
    }
  });

  auto lists_for = [&](auto score_of) {
    std::vector<rank::RankedList> lists;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      const auto& q = *queries[qi];
      std::vector<rank::RankedEntry> entries;
      for (std::size_t ci = 0; ci < q.commits.size(); ++ci) {
        entries.push_back({q.commits[ci].commit_id, score_of(scores[qi][ci]), q.commits[ci].is_patch});
      }
      lists.push_back(rank::make_ranked_list(q.cve.cve_id, std::move(entries)));
    }
    return lists;
  };
  const auto original = lists_for([](const Scores& s) { return s.original; });

  struct PerQuery {
    std::vector<double> suff, comp;
  };
  std::map<std::pair<int, int>, PerQuery> per;
  std::vector<ReportRow> rows;
  for (auto field : settings.fields) {
    const int f = field == Field::message ? 0 : 1;
    for (auto method : settings.methods) {
      const int m = method == Method::tfidf ? 0 : 1;
      PerQuery pq;
      pq.suff = per_query_faithfulness(original, lists_for([&](const Scores& s) { return s.masked[m][f][0]; }));
      pq.comp = per_query_faithfulness(original, lists_for([&](const Scores& s) { return s.masked[m][f][1]; }));
      per[{m, f}] = pq;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  for (auto method : settings.methods) {
    const int m = method == Method::tfidf ? 0 : 1;
    for (auto field : settings.fields) {
      const int f = field == Field::message ? 0 : 1;
      ReportRow row;
      row.method = method;
      row.field = field;
      row.fold = fold;
      row.k = settings.k;
      std::size_t npos = 0;
      double tok = 0;
      for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        for (std::size_t ci = 0; ci < queries[qi]->commits.size(); ++ci) {
          if (!queries[qi]->commits[ci].is_patch) continue;
          ++npos;
          tok += static_cast<double>(scores[qi][ci].tokens[m][f]);
        }
      }
      row.mean_tokens_pos = npos == 0 ? 0.0 : tok / static_cast<double>(npos);
      const auto& mine = per.at({m, f});
      row.sufficiency = mean(mine.suff);
      row.comprehensiveness = mean(mine.comp);
      row.p_value = row.t_stat = row.p_value_comp = row.t_stat_comp = nan;
      auto other = per.find({1 - m, f});
      if (other != per.end() && queries.size() >= 2) {
        const auto ts = paired_t_test(mine.suff, other->second.suff);
        const auto tc = paired_t_test(mine.comp, other->second.comp);
        row.t_stat = ts.t;
        row.p_value = ts.p;
        row.t_stat_comp = tc.t;
        row.p_value_comp = tc.p;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

std::string report_tsv(std::span<const ReportRow> rows) {
  std::string out =
      "method\tfield\tfold\tk\tmean_tokens_pos\tsufficiency\tcomprehensiveness\tp_value\tt_stat\tp_value_comp\t"
      "t_stat_comp\n";
  for (const auto& r : rows) {
    out += std::string(highlight::to_string(r.method)) + "\t" + std::string(highlight::to_string(r.field)) + "\t" +
           r.fold + "\t" + std::to_string(r.k) + "\t" + num(r.mean_tokens_pos) + "\t" + num(r.sufficiency) + "\t" +
           num(r.comprehensiveness) + "\t" + num(r.p_value) + "\t" + num(r.t_stat) + "\t" + num(r.p_value_comp) +
           "\t" + num(r.t_stat_comp) + "\n";
  }
  return out;
}

std::string curve_tsv(std::span<const CurvePoint> points, Method method, Field field, Mode mode) {
  std::string out = "method\tfield\tmode\tk\tmean_tokens\tmean_proba\n";
  for (const auto& p : points) {
    out += std::string(highlight::to_string(method)) + "\t" + std::string(highlight::to_string(field)) + "\t" +
           std::string(to_string(mode)) + "\t" + std::to_string(p.k) + "\t" + num(p.mean_tokens) + "\t" +
           num(p.mean_proba) + "\n";
  }
  return out;
}

}  // namespace patchtrace::faith
