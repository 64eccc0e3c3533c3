#include "patchtrace/highlight.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "patchtrace/error.hpp"

namespace patchtrace::highlight {

using nlohmann::json;

std::string_view to_string(Field f) noexcept { return f == Field::message ? "message" : "diff"; }

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::tfidf: return "tfidf";
    case Method::lime: return "lime";
    case Method::none: return "none";
  }
  return "none";
}

std::optional<Field> parse_field(std::string_view s) noexcept {
  if (s == "message") return Field::message;
  if (s == "diff") return Field::diff;
  return std::nullopt;
}

std::optional<Method> parse_method(std::string_view s) noexcept {
  if (s == "tfidf") return Method::tfidf;
  if (s == "lime") return Method::lime;
  if (s == "none") return Method::none;
  return std::nullopt;
}

json to_json(const Highlight& h) {
  json items = json::array();
  for (const auto& it : h.items) {
    items.push_back({{"start", it.span.start}, {"end", it.span.end}, {"text", it.span.text}, {"weight", it.weight}});
  }
  return {{"field", to_string(h.field)}, {"method", to_string(h.method)}, {"items", std::move(items)}};
}

Highlight highlight_from_json(const json& j) {
  Highlight h;
  const auto field = parse_field(j.at("field").get<std::string>());
  const auto method = parse_method(j.at("method").get<std::string>());
  if (!field || !method) throw ParseError(0, "unknown highlight field or method");
  h.field = *field;
  h.method = *method;
  for (const auto& it : j.at("items")) {
    Item item;
    item.span.start = it.at("start").get<std::size_t>();
    item.span.end = it.at("end").get<std::size_t>();
    item.span.text = it.at("text").get<std::string>();
    item.weight = it.at("weight").get<double>();
    h.items.push_back(std::move(item));
  }
  return h;
}

double idf_cve(const std::string& term, const std::string& cve_id, const corpus::InvertedIndex& index, double alpha) {
  const std::size_t df = index.df_cve(term, cve_id);
  if (df == 0) throw Error("term '" + term + "' is not indexed under " + cve_id);
  const double nq = static_cast<double>(index.cve_commits(cve_id));
  return std::max(std::log2(nq / static_cast<double>(df)) - alpha, 0.0);
}

double idf_all(const std::string& term, const corpus::InvertedIndex& index, double beta) {
  const std::size_t df = index.df(term);
  if (df == 0) throw Error("term '" + term + "' is not indexed");
  const double n = static_cast<double>(index.total_commits());
  return std::max(std::log2(n / static_cast<double>(df)) - beta, 0.0);
}

double logtf(std::size_t tf_msg, std::size_t tf_diff) {
  return 0.5 * std::log2(1.0 + static_cast<double>(tf_msg)) + 0.5 * std::log2(1.0 + static_cast<double>(tf_diff));
}

namespace {

struct TermStats {
  std::size_t tf = 0;
  std::size_t first = 0;  // position of the first occurrence in the field
};

std::unordered_map<std::string, TermStats> field_stats(std::span<const TokenSpan> tokens) {
  std::unordered_map<std::string, TermStats> stats;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!text::is_informative(tokens[i].text)) continue;
    auto [it, fresh] = stats.try_emplace(text::fold(tokens[i].text), TermStats{0, i});
    ++it->second.tf;
  }
  return stats;
}

struct Candidate {
  double weight;
  std::size_t first;
};

Highlight select(Field field, std::span<const TokenSpan> tokens, std::vector<Candidate> cands, std::size_t k) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.first < b.first;
  });
  Highlight h{field, Method::tfidf, {}};
  for (const auto& c : cands) {
    if (h.items.size() == k) break;
    if (c.weight <= 0.0) break;
    h.items.push_back({tokens[c.first], c.weight});
  }
  return h;
}

}  // namespace

FieldHighlights highlight(const rank::PreparedCve& cve, const rank::PreparedCommit& commit,
                          const HighlightParams& params, const corpus::InvertedIndex& index) {
  std::unordered_set<std::string> query;
  for (const auto& t : cve.tokens) {
    if (text::is_informative(t.text)) query.insert(text::fold(t.text));
  }
  const auto chunk = commit.top_chunk_tokens();
  const auto msg = field_stats(commit.message_tokens);
  const auto diff = field_stats(chunk);

  auto tf_of = [](const std::unordered_map<std::string, TermStats>& m, const std::string& term) {
    auto it = m.find(term);
    return it == m.end() ? std::size_t{0} : it->second.tf;
  };
  auto idf = [&](const std::string& term) {
    return idf_cve(term, cve.cve_id, index, params.alpha) * idf_all(term, index, params.beta);
  };

  std::vector<Candidate> msg_cands;
  for (const auto& [term, st] : msg) {
    if (!query.contains(term)) continue;
    msg_cands.push_back({logtf(st.tf, tf_of(diff, term)) * idf(term), st.first});
  }
  std::vector<Candidate> diff_cands;
  for (const auto& [term, st] : diff) {
    if (!query.contains(term)) continue;
    const double tf = params.diff_tf_mode == DiffTfMode::raw ? static_cast<double>(st.tf)
                                                             : logtf(tf_of(msg, term), st.tf);
    diff_cands.push_back({tf * idf(term), st.first});
  }
  return {select(Field::message, commit.message_tokens, std::move(msg_cands), params.k),
          select(Field::diff, chunk, std::move(diff_cands), params.k)};
}

Highlight project(const Highlight& source, std::span<const TokenSpan> target, std::string_view text) {
  for (const auto& it : source.items) {
    const auto& s = it.span;
    if (s.start >= s.end || s.end > text.size() || text.substr(s.start, s.end - s.start) != s.text) {
      throw Error("highlight item '" + s.text + "' does not match the target text at [" + std::to_string(s.start) +
                  "," + std::to_string(s.end) + ")");
    }
  }
  Highlight out{source.field, source.method, {}};
  for (const auto& t : target) {
    double w = 0.0;
    for (const auto& it : source.items) {
      if (it.span.start < t.end && t.start < it.span.end) w = std::max(w, it.weight);
    }
    if (w > 0.0) out.items.push_back({t, w});
  }
  std::stable_sort(out.items.begin(), out.items.end(),
                   [](const Item& a, const Item& b) { return a.weight > b.weight; });
  return out;
}

Highlight to_surface(const Highlight& source, std::span<const TokenSpan> field_tokens, std::string_view text) {
  std::vector<TokenSpan> surface;
  for (const auto& t : field_tokens) {
    if (t.origin == text::Origin::surface && text::is_informative(t.text)) surface.push_back(t);
  }
  return project(source, surface, text);
}

Highlight truncate(Highlight h, std::size_t k) {
  if (h.items.size() > k) h.items.resize(k);
  return h;
}

}  // namespace patchtrace::highlight
