#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchtrace/highlight.hpp"
#include "patchtrace/lime.hpp"
#include "patchtrace/ranker.hpp"

namespace patchtrace::faith {

using highlight::Field;
using highlight::Highlight;
using highlight::Method;
using text::TokenSpan;

enum class Mode { sufficiency_keep_only, comprehensiveness_remove };

std::string_view to_string(Mode m) noexcept;

/// Keep-only retains the tokens lying inside a highlighted span; remove
/// retains exactly the rest. Throws Error when an item does not match
/// `text` at its offsets.
std::vector<TokenSpan> mask_field(std::span<const TokenSpan> tokens, std::string_view text, const Highlight& h,
                                  Mode mode);

/// Scorer output (proba') on the commit with the highlighted field masked
/// and the other field untouched. The full pipeline, chunk selection
/// included, runs on the masked input.
double masked_score(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, const Highlight& h, Mode mode,
                    const rank::Scorer& scorer);

using QueryMetric = std::function<double(const rank::RankedList&)>;

double prec_at_1(const rank::RankedList& list);

/// |metric(original) - metric(rescored)| per query, in input order. Throws
/// Error unless both sides cover identical (cve, commit) pairs.
std::vector<double> per_query_faithfulness(std::span<const rank::RankedList> original,
                                           std::span<const rank::RankedList> rescored,
                                           const QueryMetric& metric = prec_at_1);

/// Mean of per_query_faithfulness; 0 for no queries.
double faithfulness_metric(std::span<const rank::RankedList> original, std::span<const rank::RankedList> rescored,
                           const QueryMetric& metric = prec_at_1);

struct TTest {
  double t = 0;
  double p = 1;
};

/// Paired two-sided t test on a - b. All-zero differences give t=0, p=1;
/// other zero-variance differences give t=+-inf, p=0. Throws Error for
/// unequal lengths or fewer than two pairs.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// Student t CDF with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct BudgetPair {
  Highlight tfidf;  // cut at k, projected onto surface tokens
  Highlight lime;   // exactly tfidf.items.size() tokens
};

BudgetPair budget_match(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, Field field, std::size_t k,
                        const highlight::HighlightParams& params, const corpus::InvertedIndex& index,
                        const rank::Scorer& scorer, const lime::LimeConfig& config);

/// Field text and tokens a highlight of `field` refers to.
std::string_view field_text(const rank::PreparedCommit& commit, Field field);

/// TfIdf-Highlight for one field, cut at k and projected onto informative
/// surface tokens.
Highlight tfidf_surface(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, Field field, std::size_t k,
                        const highlight::HighlightParams& params, const corpus::InvertedIndex& index);

struct Example {
  const rank::PreparedCve* cve;
  const rank::PreparedCommit* commit;
};

struct CurvePoint {
  std::size_t k = 0;
  double mean_tokens = 0;
  double mean_proba = 0;
};

struct CurveSettings {
  Mode mode = Mode::sufficiency_keep_only;
  Method method = Method::tfidf;
  Field field = Field::message;
  highlight::HighlightParams params;
  lime::LimeConfig lime;
  std::size_t jobs = 1;
};

/// Mean proba' over the given (positive) examples for each budget k.
/// TfIdf highlights are cut at k; LIME selects min(k, tokens) tokens.
/// Throws Error for Method::none.
std::vector<CurvePoint> curve(std::span<const Example> positives, std::span<const std::size_t> ks,
                              const CurveSettings& settings, const rank::Scorer& scorer,
                              const corpus::InvertedIndex& index);

struct ReportRow {
  Method method = Method::tfidf;
  Field field = Field::message;
  std::string fold;
  std::size_t k = 0;
  double mean_tokens_pos = 0;
  double sufficiency = 0;
  double comprehensiveness = 0;
  // Paired test of this method against the other method over per-query
  // values; NaN when only one method is evaluated.
  double p_value = 0;
  double t_stat = 0;
  double p_value_comp = 0;
  double t_stat_comp = 0;
};

struct EvalSettings {
  std::vector<Method> methods{Method::tfidf, Method::lime};
  std::vector<Field> fields{Field::message, Field::diff};
  std::size_t k = 5;
  highlight::HighlightParams params;
  lime::LimeConfig lime;
  std::size_t jobs = 1;
};

/// One row per (method, field). LIME is budget-matched to TfIdf-Highlight.
/// Throws Error for Method::none.
std::vector<ReportRow> evaluate(const rank::Workspace& ws, const rank::Scorer& scorer, const EvalSettings& settings,
                                const std::string& fold);

/// Tab-separated with header: method field fold k mean_tokens_pos
/// sufficiency comprehensiveness p_value t_stat p_value_comp t_stat_comp
std::string report_tsv(std::span<const ReportRow> rows);

/// Tab-separated with header: method field mode k mean_tokens mean_proba
std::string curve_tsv(std::span<const CurvePoint> points, Method method, Field field, Mode mode);

}  // namespace patchtrace::faith
