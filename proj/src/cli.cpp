#include "patchtrace/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "patchtrace/corpus.hpp"
#include "patchtrace/error.hpp"
#include "patchtrace/faithfulness.hpp"
#include "patchtrace/highlight.hpp"
#include "patchtrace/lime.hpp"
#include "patchtrace/parallel.hpp"
#include "patchtrace/ranker.hpp"
#include "patchtrace/review.hpp"
#include "patchtrace/versionmatch.hpp"

namespace patchtrace::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Usage : public Error {
 public:
  using Error::Error;
};

std::string env_dir() {
  const char* d = std::getenv("PATCHTRACE_DATA");
  return d ? std::string(d) : std::string();
}

// Explicit path, else <PATCHTRACE_DATA>/<name>.
std::string resolve(const std::string& given, const std::string& name, const std::string& flag) {
  if (!given.empty()) return given;
  const auto d = env_dir();
  if (d.empty()) throw Usage("missing " + flag + " (or set PATCHTRACE_DATA)");
  return (fs::path(d) / name).string();
}

std::string input_file(const std::string& given, const std::string& name, const std::string& flag) {
  auto p = resolve(given, name, flag);
  if (!fs::is_regular_file(p)) throw Usage(flag + ": no such file: " + p);
  return p;
}

void check_output(const std::string& path) {
  if (path.empty() || path == "-") return;
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw Usage("output directory does not exist: " + parent.string());
}

void emit(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << data;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << data;
}

std::optional<corpus::Split> parse_fold(const std::string& s) {
  if (s == "all") return std::nullopt;
  auto f = corpus::parse_split(s);
  if (!f) throw Usage("--fold must be train, validation, test or all");
  return f;
}

struct Common {
  std::string data;
  std::string fold = "all";
  std::size_t jobs = default_jobs();
  std::string out = "-";
};

void add_data(CLI::App* sub, Common& c) {
  sub->add_option("--data", c.data, "Dataset file (default $PATCHTRACE_DATA/dataset.jsonl)");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

void add_fold(CLI::App* sub, Common& c) {
  sub->add_option("--fold", c.fold, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
}

void add_out(CLI::App* sub, Common& c, const std::string& what) {
  sub->add_option("--out", c.out, what + " ('-' = stdout)");
}

struct HighlightOpts {
  double alpha = 1.0;
  double beta = 0.01;
  std::size_t k = 5;
  std::string diff_tf = "raw";

  highlight::HighlightParams params() const {
    highlight::HighlightParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.k = k;
    p.diff_tf_mode = diff_tf == "log" ? highlight::DiffTfMode::log : highlight::DiffTfMode::raw;
    return p;
  }
};

void add_highlight(CLI::App* sub, HighlightOpts& h) {
  sub->add_option("--k", h.k, "Tokens per field")->check(CLI::NonNegativeNumber);
  sub->add_option("--alpha", h.alpha, "Per-CVE idf shift");
  sub->add_option("--beta", h.beta, "Global idf shift");
  sub->add_option("--diff-tf", h.diff_tf, "Diff term frequency: raw or log")->check(CLI::IsMember({"raw", "log"}));
}

struct LimeOpts {
  std::size_t samples = 1000;
  double lambda = 1.0;
  double width = 0.25;
  std::optional<std::uint64_t> seed;

  lime::LimeConfig config() const {
    lime::LimeConfig c;
    c.n_samples = samples;
    c.ridge_lambda = lambda;
    c.kernel_width = width;
    c.seed = seed.value_or(0);
    return c;
  }
};

void add_lime(CLI::App* sub, LimeOpts& l) {
  sub->add_option("--samples", l.samples, "Perturbations per explanation")->check(CLI::PositiveNumber);
  sub->add_option("--lambda", l.lambda, "Ridge penalty")->check(CLI::NonNegativeNumber);
  sub->add_option("--kernel-width", l.width, "Proximity kernel width")->check(CLI::PositiveNumber);
  sub->add_option("--seed", l.seed, "Random seed");
}

void need_seed(const LimeOpts& l) {
  if (!l.seed) throw Usage("--seed is required when LIME runs");
}

highlight::Method method_of(const std::string& s) {
  auto m = highlight::parse_method(s);
  if (!m) throw Usage("unknown method " + s);
  return *m;
}

highlight::Field field_of(const std::string& s) {
  auto f = highlight::parse_field(s);
  if (!f) throw Usage("unknown field " + s);
  return *f;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json ranked_to_json(const rank::RankedList& l) {
  json entries = json::array();
  for (const auto& e : l.entries) {
    entries.push_back({{"commit_id", e.commit_id}, {"proba", e.score}, {"is_patch", e.is_patch}});
  }
  return {{"cve_id", l.cve_id}, {"entries", entries}};
}

rank::RankedList ranked_from_json(const json& j) {
  rank::RankedList l;
  l.cve_id = j.at("cve_id").get<std::string>();
  for (const auto& e : j.at("entries")) {
    l.entries.push_back({e.at("commit_id").get<std::string>(), e.at("proba").get<double>(),
                         e.value("is_patch", false)});
  }
  return l;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(n, path + ": " + e.what());
    }
  }
  return out;
}

std::vector<rank::RankedList> rank_all(const rank::Workspace& ws, const rank::Scorer& scorer, std::size_t jobs) {
  std::vector<rank::RankedList> lists(ws.queries.size());
  parallel_for(ws.queries.size(), jobs,
               [&](std::size_t i) { lists[i] = rank::rank(ws.queries[i].cve, ws.queries[i].commits, scorer); });
  return lists;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

// ---- subcommands ----

int cmd_ingest(const Common& c, std::ostream& out, std::ostream& err) {
  const auto path = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  const auto ds = corpus::load_dataset(path);
  emit(c.out, corpus::serialize(ds), out);
  err << "ingested " << ds.cves.size() << " CVEs, " << ds.commit_count() << " commits\n";
  return 0;
}

int cmd_stats(const Common& c, std::ostream& out) {
  const auto path = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  const auto s = corpus::compute_stats(corpus::load_dataset(path));
  json j = {{"avg_tokens_cve_desc", s.avg_tokens_cve_desc},
            {"avg_tokens_msg", s.avg_tokens_msg},
            {"avg_tokens_diff", s.avg_tokens_diff},
            {"median_tokens_diff", s.median_tokens_diff},
            {"q3_tokens_diff", s.q3_tokens_diff},
            {"n_commits", s.n_commits},
            {"n_positive", s.n_positive},
            {"n_negative", s.n_negative},
            {"pos_neg", std::to_string(s.pos_neg_ratio.first) + ":" + std::to_string(s.pos_neg_ratio.second)}};
  emit(c.out, j.dump(2) + "\n", out);
  return 0;
}

struct WindowOpts {
  std::string timelines;
  std::vector<std::size_t> radii{0, 1, 2, 3, 5, 10};
  double threshold = 0.8;
};

int cmd_window(const Common& c, const WindowOpts& w, std::ostream& out) {
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  const auto tl = input_file(w.timelines, "timelines.jsonl", "--timelines");
  check_output(c.out);
  const auto ds = corpus::load_dataset(data);
  const auto timelines = version::load_timelines(tl);
  const auto rows = version::recall_table(ds, timelines, w.radii, w.threshold);
  std::string s = "radius\thits\ttotal\trecall_percent\n";
  for (const auto& r : rows) {
    s += std::to_string(r.radius) + "\t" + std::to_string(r.hits) + "\t" + std::to_string(r.total) + "\t" +
         fmt(r.recall_percent) + "\n";
  }
  emit(c.out, s, out);
  return 0;
}

struct RankOpts {
  std::string scorer = "tfidf";
  std::string scores;
};

json metrics_json(const rank::MetricsReport& m) {
  return {{"Prec@1", m.prec_at_1},
          {"Recall@1", m.recall_at_1},
          {"Recall@2", m.recall_at_2},
          {"Recall@5", m.recall_at_5},
          {"MAP", m.map},
          {"AUC", m.auc ? json(*m.auc) : json(nullptr)},
          {"n_queries", m.n_queries},
          {"excluded_queries", m.excluded_queries}};
}

int cmd_rank(const Common& c, const RankOpts& r, std::ostream& out) {
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  check_output(r.scores);
  const auto fold = parse_fold(c.fold);
  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, fold, c.jobs);
  const rank::TfIdfScorer scorer(ws.index);
  const auto lists = rank_all(ws, scorer, c.jobs);
  auto m = metrics_json(rank::eval_metrics(lists));
  m["scorer"] = r.scorer;
  m["fold"] = c.fold;
  if (!r.scores.empty()) {
    std::vector<json> rows;
    for (const auto& l : lists) rows.push_back(ranked_to_json(l));
    emit(r.scores, jsonl(rows), out);
  }
  emit(c.out, m.dump(2) + "\n", out);
  return 0;
}

struct SelectOpts {
  std::vector<std::string> cves;
  std::vector<std::string> fields{"message", "diff"};
};

void add_select(CLI::App* sub, SelectOpts& s) {
  sub->add_option("--cve", s.cves, "Restrict to these CVE ids");
  sub->add_option("--field", s.fields, "Fields to highlight")->check(CLI::IsMember({"message", "diff"}));
}

bool selected(const SelectOpts& s, const std::string& cve) {
  return s.cves.empty() || std::find(s.cves.begin(), s.cves.end(), cve) != s.cves.end();
}

int cmd_highlight(const Common& c, const HighlightOpts& h, const SelectOpts& sel, bool words, std::ostream& out) {
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, parse_fold(c.fold), c.jobs);
  const auto params = h.params();
  std::vector<std::vector<json>> per(ws.queries.size());
  parallel_for(ws.queries.size(), c.jobs, [&](std::size_t i) {
    const auto& q = ws.queries[i];
    if (!selected(sel, q.cve.cve_id)) return;
    for (const auto& commit : q.commits) {
      json hs = json::array();
      const auto both = highlight::highlight(q.cve, commit, params, ws.index);
      for (const auto& fs : sel.fields) {
        const auto f = field_of(fs);
        if (words) {
          hs.push_back(highlight::to_json(f == highlight::Field::message ? both.message : both.diff));
        } else {
          hs.push_back(highlight::to_json(faith::tfidf_surface(q.cve, commit, f, params.k, params, ws.index)));
        }
      }
      per[i].push_back({{"cve_id", q.cve.cve_id}, {"commit_id", commit.commit_id}, {"highlights", hs}});
    }
  });
  std::string s;
  for (const auto& rows : per) s += jsonl(rows);
  emit(c.out, s, out);
  return 0;
}

int cmd_explain(const Common& c, const LimeOpts& l, std::size_t k, const std::string& selection,
                const SelectOpts& sel, std::ostream& out) {
  need_seed(l);
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, parse_fold(c.fold), c.jobs);
  const rank::TfIdfScorer scorer(ws.index);
  const auto mode = selection == "exact" ? lime::Selection::exact : lime::Selection::positive_only;
  const auto cfg = l.config();
  std::vector<std::vector<json>> per(ws.queries.size());
  parallel_for(ws.queries.size(), c.jobs, [&](std::size_t i) {
    const auto& q = ws.queries[i];
    if (!selected(sel, q.cve.cve_id)) return;
    for (const auto& commit : q.commits) {
      json hs = json::array();
      for (const auto& fs : sel.fields) {
        const auto f = field_of(fs);
        const auto e =
            lime::explain(q.cve, commit, f, k, scorer, lime::for_example(cfg, q.cve.cve_id, commit.commit_id, f), mode);
        hs.push_back(highlight::to_json(e.highlight));
      }
      per[i].push_back({{"cve_id", q.cve.cve_id}, {"commit_id", commit.commit_id}, {"highlights", hs}});
    }
  });
  std::string s;
  for (const auto& rows : per) s += jsonl(rows);
  emit(c.out, s, out);
  return 0;
}

struct FaithOpts {
  std::vector<std::string> methods{"tfidf", "lime"};
  std::vector<std::string> fields{"message", "diff"};
};

int cmd_faithfulness(const Common& c, const HighlightOpts& h, const LimeOpts& l, const FaithOpts& f,
                     std::ostream& out) {
  faith::EvalSettings settings;
  settings.methods.clear();
  for (const auto& m : f.methods) settings.methods.push_back(method_of(m));
  settings.fields.clear();
  for (const auto& x : f.fields) settings.fields.push_back(field_of(x));
  if (std::find(settings.methods.begin(), settings.methods.end(), highlight::Method::lime) != settings.methods.end()) {
    need_seed(l);
  }
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  settings.k = h.k;
  settings.params = h.params();
  settings.lime = l.config();
  settings.jobs = c.jobs;
  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, parse_fold(c.fold), c.jobs);
  const rank::TfIdfScorer scorer(ws.index);
  const auto rows = faith::evaluate(ws, scorer, settings, c.fold);
  emit(c.out, faith::report_tsv(rows), out);
  return 0;
}

struct CurveOpts {
  std::string method = "tfidf";
  std::string field = "message";
  std::string mode = "sufficiency";
  std::vector<std::size_t> ks{1, 2, 3, 5, 10, 20};
  std::string gnuplot;
};

int cmd_curve(const Common& c, const HighlightOpts& h, const LimeOpts& l, const CurveOpts& o, std::ostream& out) {
  faith::CurveSettings settings;
  settings.method = method_of(o.method);
  settings.field = field_of(o.field);
  settings.mode = o.mode == "sufficiency" ? faith::Mode::sufficiency_keep_only : faith::Mode::comprehensiveness_remove;
  if (settings.method == highlight::Method::lime) need_seed(l);
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  check_output(c.out);
  check_output(o.gnuplot);
  settings.params = h.params();
  settings.lime = l.config();
  settings.jobs = c.jobs;
  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, parse_fold(c.fold), c.jobs);
  const rank::TfIdfScorer scorer(ws.index);
  std::vector<faith::Example> pos;
  for (const auto& q : ws.queries) {
    for (const auto& commit : q.commits) {
      if (commit.is_patch) pos.push_back({&q.cve, &commit});
    }
  }
  const auto points = faith::curve(pos, o.ks, settings, scorer, ws.index);
  const auto tsv = faith::curve_tsv(points, settings.method, settings.field, settings.mode);
  emit(c.out, tsv, out);
  if (!o.gnuplot.empty()) {
    const std::string src = c.out == "-" ? "curve.tsv" : c.out;
    std::string g = "set terminal pngcairo size 800,500\n";
    g += "set output '" + fs::path(src).replace_extension(".png").string() + "'\n";
    g += "set xlabel 'mean highlighted tokens'\nset ylabel 'mean proba'\nset key off\n";
    g += "plot '" + src + "' using 5:6 skip 1 with linespoints title '" + o.method + " " + o.field + " " + o.mode +
         "'\n";
    emit(o.gnuplot, g, out);
  }
  return 0;
}

struct SessionOpts {
  std::string dir;
  std::string session_id;
  std::string protocol = "easy";
  std::size_t groups = 50;
  std::vector<std::string> methods{"tfidf", "lime", "none"};
  std::string ranked;
  std::vector<std::string> highlights;
};

int cmd_session_build(const Common& c, const HighlightOpts& h, const LimeOpts& l, const SessionOpts& s,
                      std::ostream& out) {
  need_seed(l);
  const auto data = input_file(c.data, "dataset.jsonl", "--data");
  const auto dir = resolve(s.dir, "sessions", "--dir");
  if (!s.ranked.empty() && !fs::is_regular_file(s.ranked)) throw Usage("--ranked: no such file: " + s.ranked);
  for (const auto& p : s.highlights) {
    if (!fs::is_regular_file(p)) throw Usage("--highlights: no such file: " + p);
  }
  if (!review::valid_session_id(s.session_id)) throw Usage("--session-id must match [A-Za-z0-9_-]+");
  review::SessionConfig cfg;
  cfg.session_id = s.session_id;
  cfg.protocol = *review::parse_protocol(s.protocol);
  cfg.n_groups = s.groups;
  cfg.seed = *l.seed;
  cfg.methods.clear();
  for (const auto& m : s.methods) cfg.methods.push_back(method_of(m));

  const auto ds = corpus::load_dataset(data);
  const auto ws = rank::prepare_workspace(ds, parse_fold(c.fold), c.jobs);
  const rank::TfIdfScorer scorer(ws.index);
  std::vector<rank::RankedList> lists;
  if (s.ranked.empty()) {
    lists = rank_all(ws, scorer, c.jobs);
  } else {
    for (const auto& j : read_jsonl(s.ranked)) lists.push_back(ranked_from_json(j));
  }

  // Precomputed highlights (normalized offsets) keyed by cve, commit, method.
  std::map<std::tuple<std::string, std::string, highlight::Method>, std::vector<highlight::Highlight>> given;
  for (const auto& p : s.highlights) {
    for (const auto& j : read_jsonl(p)) {
      for (const auto& hj : j.at("highlights")) {
        auto hl = highlight::highlight_from_json(hj);
        given[{j.at("cve_id").get<std::string>(), j.at("commit_id").get<std::string>(), hl.method}].push_back(hl);
      }
    }
  }
  std::map<std::string, const rank::PreparedQuery*> queries;
  for (const auto& q : ws.queries) queries[q.cve.cve_id] = &q;
  const auto params = h.params();
  const auto lcfg = l.config();
  review::HighlightFn fn = [&](const corpus::CveRecord& cve, const corpus::CommitRecord& raw,
                               highlight::Method m) -> std::vector<highlight::Highlight> {
    const auto* q = queries.at(cve.cve_id);
    const rank::PreparedCommit* pc = nullptr;
    for (const auto& x : q->commits) {
      if (x.commit_id == raw.commit_id) pc = &x;
    }
    if (!pc) throw Error("commit " + raw.commit_id + " is not prepared");
    std::vector<highlight::Highlight> norm;
    if (auto it = given.find({cve.cve_id, raw.commit_id, m}); it != given.end()) {
      norm = it->second;
    } else {
      for (auto f : {highlight::Field::message, highlight::Field::diff}) {
        if (m == highlight::Method::tfidf) {
          norm.push_back(faith::tfidf_surface(q->cve, *pc, f, params.k, params, ws.index));
        } else {
          norm.push_back(lime::explain(q->cve, *pc, f, params.k, scorer,
                                       lime::for_example(lcfg, cve.cve_id, raw.commit_id, f))
                             .highlight);
        }
      }
    }
    std::vector<highlight::Highlight> out;
    for (const auto& hl : norm) {
      if (hl.field == highlight::Field::message) {
        out.push_back(review::to_raw(hl, pc->message, raw.message));
      } else {
        out.push_back(review::to_raw(hl, pc->diff, raw.diff));
      }
    }
    return out;
  };
  corpus::Dataset subset;
  subset.candidates = ds.candidates;
  subset.split = ds.split;
  for (const auto& cve : ds.cves) {
    if (queries.count(cve.cve_id)) subset.cves.push_back(cve);
  }
  const auto session = review::build_session(subset, lists, fn, cfg);
  review::SessionStore::create(dir, session);
  std::map<std::string, std::size_t> counts;
  for (const auto& g : session.groups) ++counts[std::string(highlight::to_string(g.method))];
  json summary = {{"session_id", cfg.session_id},
                  {"dir", (fs::path(dir) / cfg.session_id).string()},
                  {"groups", session.groups.size()},
                  {"methods", counts}};
  out << summary.dump(2) << "\n";
  return 0;
}

struct ServeOpts {
  std::string dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string admin_token;
};

int cmd_serve(const ServeOpts& s, std::ostream& err) {
  const auto dir = resolve(s.dir, "sessions", "--dir");
  if (!fs::is_directory(dir)) throw Usage("--dir: no such directory: " + dir);
  std::string token = s.admin_token;
  if (token.empty()) {
    if (const char* t = std::getenv("PATCHTRACE_ADMIN_TOKEN")) token = t;
  }
  if (token.empty()) err << "warning: no admin token; report and export are disabled\n";
  review::Server server(dir, token);
  const int port = server.bind(s.host, s.port);
  if (port < 0) throw Error("cannot bind " + s.host + ":" + std::to_string(s.port));
  err << "serving " << dir << " on http://" << s.host << ":" << port << "\n";
  return server.serve() ? 0 : 1;
}

struct ReportOpts {
  std::string dir;
  std::string session_id;
  std::string format = "tsv";
};

int cmd_report(const Common& c, const ReportOpts& r, std::ostream& out) {
  const auto dir = resolve(r.dir, "sessions", "--dir");
  if (!fs::is_regular_file(fs::path(dir) / r.session_id / "manifest.jsonl")) {
    throw Usage("no session " + r.session_id + " under " + dir);
  }
  check_output(c.out);
  const auto store = review::SessionStore::open(dir, r.session_id);
  const auto rep = store->report();
  emit(c.out, r.format == "json" ? review::to_json(rep).dump(2) + "\n" : review::report_tsv(rep), out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace vulnerability advisories to their patch commits", "patchtrace"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  HighlightOpts hl;
  LimeOpts lo;

  auto* ingest = app.add_subcommand("ingest", "Validate a dataset export and write its canonical form");
  add_data(ingest, common);
  add_out(ingest, common, "Canonical dataset");

  auto* stats = app.add_subcommand("stats", "Corpus token statistics as JSON");
  add_data(stats, common);
  add_out(stats, common, "Statistics");

  WindowOpts wo;
  auto* window = app.add_subcommand("window", "Recall of version-tag candidate windows by radius");
  add_data(window, common);
  window->add_option("--timelines", wo.timelines, "Tag timeline file (default $PATCHTRACE_DATA/timelines.jsonl)");
  window->add_option("--radius", wo.radii, "Radii to evaluate")->delimiter(',');
  window->add_option("--threshold", wo.threshold, "Minimum tag similarity")->check(CLI::Range(0.0, 1.0));
  add_out(window, common, "Recall table TSV");

  RankOpts ro;
  auto* rankc = app.add_subcommand("rank", "Rank candidate commits and report retrieval metrics");
  add_data(rankc, common);
  add_fold(rankc, common);
  rankc->add_option("--scorer", ro.scorer, "Scorer")->check(CLI::IsMember({"tfidf"}));
  rankc->add_option("--scores", ro.scores, "Write ranked lists (JSONL) here");
  add_out(rankc, common, "Metrics JSON");

  SelectOpts so;
  bool words = false;
  auto* hlc = app.add_subcommand("highlight", "TfIdf-Highlight rationale tokens per commit (JSONL)");
  add_data(hlc, common);
  add_fold(hlc, common);
  add_highlight(hlc, hl);
  add_select(hlc, so);
  hlc->add_flag("--words", words, "Emit word-level items instead of surface tokens");
  add_out(hlc, common, "Highlights JSONL");

  std::size_t explain_k = 5;
  std::string selection = "positive";
  auto* ex = app.add_subcommand("explain", "LIME explanations per commit (JSONL)");
  add_data(ex, common);
  add_fold(ex, common);
  add_lime(ex, lo);
  add_select(ex, so);
  ex->add_option("--k", explain_k, "Tokens per field");
  ex->add_option("--selection", selection, "positive or exact")->check(CLI::IsMember({"positive", "exact"}));
  add_out(ex, common, "Explanations JSONL");

  FaithOpts fo;
  auto* fa = app.add_subcommand("faithfulness", "Sufficiency and comprehensiveness report (TSV)");
  add_data(fa, common);
  add_fold(fa, common);
  add_highlight(fa, hl);
  add_lime(fa, lo);
  fa->add_option("--method", fo.methods, "tfidf and/or lime")->check(CLI::IsMember({"tfidf", "lime"}));
  fa->add_option("--field", fo.fields, "message and/or diff")->check(CLI::IsMember({"message", "diff"}));
  add_out(fa, common, "Report TSV");

  CurveOpts co;
  auto* cu = app.add_subcommand("curve", "Mean proba' against highlight budget (TSV)");
  add_data(cu, common);
  add_fold(cu, common);
  add_highlight(cu, hl);
  add_lime(cu, lo);
  cu->add_option("--method", co.method, "tfidf or lime")->check(CLI::IsMember({"tfidf", "lime"}));
  cu->add_option("--field", co.field, "message or diff")->check(CLI::IsMember({"message", "diff"}));
  cu->add_option("--mode", co.mode, "sufficiency or comprehensiveness")
      ->check(CLI::IsMember({"sufficiency", "comprehensiveness"}));
  cu->add_option("--ks", co.ks, "Budgets")->delimiter(',');
  cu->add_option("--gnuplot", co.gnuplot, "Also write a gnuplot script here");
  add_out(cu, common, "Curve TSV");

  SessionOpts sess;
  auto* sb = app.add_subcommand("session-build", "Build a blind review session");
  add_data(sb, common);
  add_fold(sb, common);
  add_highlight(sb, hl);
  add_lime(sb, lo);
  sb->add_option("--dir", sess.dir, "Session root (default $PATCHTRACE_DATA/sessions)");
  sb->add_option("--session-id", sess.session_id, "Session id")->required();
  sb->add_option("--protocol", sess.protocol, "easy or hard")->check(CLI::IsMember({"easy", "hard"}));
  sb->add_option("--groups", sess.groups, "Number of groups")->check(CLI::PositiveNumber);
  sb->add_option("--methods", sess.methods, "Methods in rotation")->check(CLI::IsMember({"tfidf", "lime", "none"}));
  sb->add_option("--ranked", sess.ranked, "Ranked lists from `rank --scores`");
  sb->add_option("--highlights", sess.highlights, "Highlights from `highlight` or `explain`");

  ServeOpts sv;
  auto* se = app.add_subcommand("serve", "Serve review sessions over HTTP");
  se->add_option("--dir", sv.dir, "Session root (default $PATCHTRACE_DATA/sessions)");
  se->add_option("--host", sv.host, "Bind address");
  se->add_option("--port", sv.port, "Port (0 = any)")->check(CLI::Range(0, 65535));
  se->add_option("--admin-token", sv.admin_token, "Token for report/export (default $PATCHTRACE_ADMIN_TOKEN)");

  ReportOpts rp;
  auto* re = app.add_subcommand("report", "Accuracy and helpfulness table of a review session");
  re->add_option("--dir", rp.dir, "Session root (default $PATCHTRACE_DATA/sessions)");
  re->add_option("--session-id", rp.session_id, "Session id")->required();
  re->add_option("--format", rp.format, "tsv or json")->check(CLI::IsMember({"tsv", "json"}));
  add_out(re, common, "Report");

  std::vector<std::string> argv_store{"patchtrace"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*ingest) return cmd_ingest(common, out, err);
    if (*stats) return cmd_stats(common, out);
    if (*window) return cmd_window(common, wo, out);
    if (*rankc) return cmd_rank(common, ro, out);
    if (*hlc) return cmd_highlight(common, hl, so, words, out);
    if (*ex) return cmd_explain(common, lo, explain_k, selection, so, out);
    if (*fa) return cmd_faithfulness(common, hl, lo, fo, out);
    if (*cu) return cmd_curve(common, hl, lo, co, out);
    if (*sb) return cmd_session_build(common, hl, lo, sess, out);
    if (*se) return cmd_serve(sv, err);
    if (*re) return cmd_report(common, rp, out);
  } catch (const Usage& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace patchtrace::cli
