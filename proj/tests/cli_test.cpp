#include "patchtrace/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oracle.hpp"
#include "patchtrace/review.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = PATCHTRACE_TEST_DATA;
const std::string kMini = kData + "/mini.jsonl";
const std::string kSynthetic = kData + "/synthetic.jsonl";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = patchtrace::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("patchtrace-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Clears PATCHTRACE_DATA for the duration of a test.
struct NoDataEnv {
  std::optional<std::string> saved;
  NoDataEnv() {
    if (const char* d = std::getenv("PATCHTRACE_DATA")) saved = d;
    unsetenv("PATCHTRACE_DATA");
  }
  ~NoDataEnv() {
    if (saved) setenv("PATCHTRACE_DATA", saved->c_str(), 1);
  }
};

}  // namespace

TEST_CASE("usage") {
  NoDataEnv env;
  const auto help = run({"--help"});
  CHECK(help.code == 0);
  for (const char* sub : {"ingest", "stats", "window", "rank", "highlight", "explain", "faithfulness", "curve",
                          "session-build", "serve", "report"}) {
    CHECK(help.out.find(sub) != std::string::npos);
  }
  CHECK(run({"rank", "--help"}).code == 0);
  CHECK(run({}).code != 0);
  CHECK(run({"frobnicate"}).code != 0);
  CHECK(run({"rank", "--data", kMini, "--bogus"}).code != 0);
  CHECK(run({"rank", "--data", kMini, "--fold", "dev"}).code != 0);

  const auto missing = run({"rank"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("PATCHTRACE_DATA") != std::string::npos);
  CHECK(run({"rank", "--data", "/nonexistent/x.jsonl"}).code == 2);
  CHECK(run({"rank", "--data", kMini, "--out", "/nonexistent/dir/m.json"}).code == 2);
  CHECK(run({"explain", "--data", kMini}).code != 0);  // seed is mandatory
  CHECK(run({"faithfulness", "--data", kMini}).code != 0);
  CHECK(run({"faithfulness", "--data", kMini, "--method", "tfidf"}).code == 0);
}

TEST_CASE("ingest and stats") {
  TempDir tmp;
  const auto r = run({"ingest", "--data", kMini});
  REQUIRE(r.code == 0);
  CHECK(r.out == patchtrace::corpus::serialize(patchtrace::corpus::load_dataset(kMini)));

  std::ofstream(tmp / "bad.jsonl") << "{\"kind\":\"cve\"}\n";
  const auto bad = run({"ingest", "--data", tmp / "bad.jsonl"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("line 1") != std::string::npos);

  const auto s = run({"stats", "--data", kMini});
  REQUIRE(s.code == 0);
  const auto j = json::parse(s.out);
  CHECK(j.at("n_commits") == 12);
  CHECK(j.at("pos_neg") == "1:3");
}

TEST_CASE("window") {
  const auto r = run({"window", "--data", kData + "/timeline_dataset.jsonl", "--timelines",
                      kData + "/timelines.jsonl", "--radius", "0,1"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 3);
  CHECK(l[0] == "radius\thits\ttotal\trecall_percent");
  CHECK(l[1].rfind("0\t3\t4\t75", 0) == 0);
  CHECK(l[2].rfind("1\t4\t4\t100", 0) == 0);
}

TEST_CASE("rank metrics match the reference implementation") {
  TempDir tmp;
  const auto r = run({"rank", "--data", kSynthetic, "--fold", "test", "--scores", tmp / "ranked.jsonl"});
  REQUIRE(r.code == 0);
  const auto m = json::parse(r.out);
  for (const char* key : {"Prec@1", "Recall@1", "Recall@2", "Recall@5", "MAP", "AUC", "n_queries",
                          "excluded_queries", "scorer", "fold"}) {
    CHECK(m.contains(key));
  }
  CHECK(m.at("fold") == "test");
  CHECK(m.at("scorer") == "tfidf");

  const auto ds = patchtrace::corpus::load_dataset(kSynthetic);
  const auto ref = oracle::rank_all(ds, oracle::count(ds));
  double p1 = 0, r5 = 0, map = 0, n = 0;
  std::vector<std::pair<double, bool>> pool;
  for (const auto& q : ref) {
    if (ds.split.at(q.cve_id) != patchtrace::corpus::Split::test) continue;
    std::vector<bool> lab;
    for (const auto& [s, p] : q.entries) lab.push_back(p);
    n += 1;
    p1 += oracle::prec_at(lab, 1);
    r5 += oracle::recall_at(lab, 5);
    map += oracle::ap(lab);
    pool.insert(pool.end(), q.entries.begin(), q.entries.end());
  }
  REQUIRE(n == 10);
  CHECK(m.at("n_queries") == 10);
  CHECK(m.at("Prec@1").get<double>() == doctest::Approx(p1 / n).epsilon(1e-9));
  CHECK(m.at("Recall@1").get<double>() == m.at("Prec@1").get<double>());
  CHECK(m.at("Recall@5").get<double>() == doctest::Approx(r5 / n).epsilon(1e-9));
  CHECK(m.at("MAP").get<double>() == doctest::Approx(map / n).epsilon(1e-9));
  CHECK(m.at("AUC").get<double>() == doctest::Approx(oracle::auc(pool)).epsilon(1e-9));

  const auto ranked = lines(slurp(tmp / "ranked.jsonl"));
  REQUIRE(ranked.size() == 10);
  const auto first = json::parse(ranked[0]);
  CHECK(first.at("entries").size() == 20);
  CHECK(first.at("entries")[0].contains("proba"));
  CHECK(first.at("entries")[0].contains("is_patch"));
  double prev = 2;
  for (const auto& e : first.at("entries")) {
    CHECK(e.at("proba").get<double>() <= prev);
    prev = e.at("proba").get<double>();
  }

  // A query set without positives reports no AUC.
  std::ofstream(tmp / "nopos.jsonl")
      << "{\"kind\":\"cve\",\"cve_id\":\"C\",\"description\":\"x\",\"repo\":\"o/r\",\"patch_commit\":null,"
         "\"affected_tag\":null,\"fixed_tag\":null,\"split\":\"test\"}\n"
         "{\"kind\":\"commit\",\"cve_id\":\"C\",\"commit_id\":\"a\",\"message\":\"x\",\"diff\":\"y\","
         "\"files\":[\"a.c\"],\"timestamp\":1}\n";
  const auto np = run({"rank", "--data", tmp / "nopos.jsonl"});
  REQUIRE(np.code == 0);
  const auto mj = json::parse(np.out);
  CHECK(mj.at("AUC").is_null());
  CHECK(mj.at("excluded_queries") == 1);
  CHECK(mj.at("n_queries") == 0);
}

TEST_CASE("highlight and explain output") {
  const auto h = run({"highlight", "--data", kMini, "--cve", "CVE-2020-0001"});
  REQUIRE(h.code == 0);
  const auto hl = lines(h.out);
  REQUIRE(hl.size() == 4);
  for (const auto& l : hl) {
    const auto j = json::parse(l);
    CHECK(j.at("cve_id") == "CVE-2020-0001");
    REQUIRE(j.at("highlights").size() == 2);
    CHECK(j.at("highlights")[0].at("field") == "message");
    CHECK(j.at("highlights")[1].at("field") == "diff");
    CHECK(j.at("highlights")[0].at("method") == "tfidf");
    CHECK(j.at("highlights")[0].at("items").size() <= 5);
  }
  const auto one = run({"highlight", "--data", kMini, "--field", "diff", "--k", "1"});
  REQUIRE(one.code == 0);
  for (const auto& l : lines(one.out)) {
    const auto j = json::parse(l);
    REQUIRE(j.at("highlights").size() == 1);
    CHECK(j.at("highlights")[0].at("items").size() <= 1);
  }

  const auto e = run({"explain", "--data", kMini, "--seed", "3", "--samples", "100", "--cve", "CVE-2020-0002"});
  REQUIRE(e.code == 0);
  const auto el = lines(e.out);
  REQUIRE(el.size() == 4);
  CHECK(json::parse(el[0]).at("highlights")[0].at("method") == "lime");
  const auto exact = run({"explain", "--data", kMini, "--seed", "3", "--samples", "100", "--selection", "exact",
                          "--k", "2", "--field", "message"});
  REQUIRE(exact.code == 0);
  for (const auto& l : lines(exact.out)) {
    const auto j = json::parse(l);
    CHECK(j.at("highlights")[0].at("items").size() <= 2);
  }
}

TEST_CASE("outputs are reproducible and independent of worker count") {
  const std::vector<std::vector<std::string>> cmds{
      {"rank", "--data", kSynthetic},
      {"highlight", "--data", kSynthetic, "--fold", "test"},
      {"explain", "--data", kSynthetic, "--fold", "test", "--seed", "11", "--samples", "60"},
      {"faithfulness", "--data", kSynthetic, "--fold", "test", "--seed", "11", "--samples", "60"},
      {"curve", "--data", kSynthetic, "--fold", "test", "--method", "lime", "--seed", "11", "--samples", "60"},
  };
  for (const auto& cmd : cmds) {
    CAPTURE(cmd[0]);
    auto a = cmd, b = cmd, c = cmd;
    a.insert(a.end(), {"--jobs", "1"});
    b.insert(b.end(), {"--jobs", "1"});
    c.insert(c.end(), {"--jobs", "3"});
    const auto ra = run(a), rb = run(b), rc = run(c);
    REQUIRE(ra.code == 0);
    CHECK(ra.out == rb.out);
    CHECK(ra.out == rc.out);
    CHECK_FALSE(ra.out.empty());
  }
  const auto s1 = run({"explain", "--data", kMini, "--seed", "1", "--samples", "60"});
  const auto s2 = run({"explain", "--data", kMini, "--seed", "2", "--samples", "60"});
  CHECK(s1.out != s2.out);
}

TEST_CASE("faithfulness and curve output") {
  TempDir tmp;
  const auto f = run({"faithfulness", "--data", kSynthetic, "--fold", "test", "--seed", "5", "--samples", "80"});
  REQUIRE(f.code == 0);
  const auto fl = lines(f.out);
  REQUIRE(fl.size() == 5);
  CHECK(fl[0] ==
        "method\tfield\tfold\tk\tmean_tokens_pos\tsufficiency\tcomprehensiveness\tp_value\tt_stat\tp_value_comp\t"
        "t_stat_comp");
  CHECK(fl[1].rfind("tfidf\tmessage\ttest\t5\t", 0) == 0);
  CHECK(fl[4].rfind("lime\tdiff\ttest\t5\t", 0) == 0);

  const auto one = run({"faithfulness", "--data", kSynthetic, "--fold", "test", "--method", "tfidf", "--field",
                        "diff", "--k", "3"});
  REQUIRE(one.code == 0);
  const auto ol = lines(one.out);
  REQUIRE(ol.size() == 2);
  CHECK(ol[1].rfind("tfidf\tdiff\ttest\t3\t", 0) == 0);
  CHECK(ol[1].find("\tnan\tnan\tnan\tnan") != std::string::npos);

  const auto c = run({"curve", "--data", kSynthetic, "--fold", "test", "--mode", "comprehensiveness", "--ks",
                      "1,3", "--out", tmp / "c.tsv", "--gnuplot", tmp / "c.gp"});
  REQUIRE(c.code == 0);
  const auto cl = lines(slurp(tmp / "c.tsv"));
  REQUIRE(cl.size() == 3);
  CHECK(cl[1].rfind("tfidf\tmessage\tcomprehensiveness\t1\t", 0) == 0);
  CHECK(slurp(tmp / "c.gp").find(tmp / "c.tsv") != std::string::npos);
}

TEST_CASE("review session from the command line") {
  TempDir tmp;
  REQUIRE(run({"rank", "--data", kSynthetic, "--scores", tmp / "ranked.jsonl", "--out", tmp / "m.json"}).code == 0);
  REQUIRE(run({"highlight", "--data", kSynthetic, "--out", tmp / "hl.jsonl"}).code == 0);
  const auto b = run({"session-build", "--data", kSynthetic, "--dir", tmp / "sessions", "--session-id", "pilot",
                      "--groups", "6", "--seed", "1", "--ranked", tmp / "ranked.jsonl", "--highlights",
                      tmp / "hl.jsonl", "--samples", "50"});
  REQUIRE(b.code == 0);
  const auto summary = json::parse(b.out);
  CHECK(summary.at("groups") == 6);
  CHECK(summary.at("methods").at("tfidf") == 2);
  CHECK(summary.at("methods").at("lime") == 2);
  CHECK(summary.at("methods").at("none") == 2);
  CHECK(fs::exists(tmp.path / "sessions" / "pilot" / "manifest.jsonl"));

  // Highlights were mapped onto the raw text.
  const auto store = patchtrace::review::SessionStore::open(tmp / "sessions", "pilot");
  for (const auto& g : store->session().groups) {
    for (const auto& c : g.commits) {
      for (const auto& h : c.highlights) {
        const auto& raw = h.field == patchtrace::highlight::Field::message ? c.message : c.diff;
        for (const auto& it : h.items) {
          CHECK(raw.substr(it.span.start, it.span.end - it.span.start) == it.span.text);
        }
      }
    }
  }

  CHECK(run({"session-build", "--data", kSynthetic, "--dir", tmp / "sessions", "--session-id", "pilot",
             "--groups", "6", "--seed", "1"})
            .code == 1);
  CHECK(run({"session-build", "--data", kSynthetic, "--dir", tmp / "sessions", "--session-id", "x",
             "--groups", "60", "--seed", "1"})
            .code == 1);
  CHECK(run({"session-build", "--data", kSynthetic, "--dir", tmp / "sessions", "--session-id", "a/b",
             "--seed", "1"})
            .code == 2);

  const auto r = run({"report", "--dir", tmp / "sessions", "--session-id", "pilot"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "annotator\tmethod\tround\tn\tcorrect\taccuracy\tn_helpfulness\thelpfulness\n");
  const auto rj = run({"report", "--dir", tmp / "sessions", "--session-id", "pilot", "--format", "json"});
  CHECK(json::parse(rj.out).at("n_labels") == 0);
  CHECK(run({"report", "--dir", tmp / "sessions", "--session-id", "nope"}).code == 2);
}

TEST_CASE("PATCHTRACE_DATA supplies default paths") {
  NoDataEnv env;
  TempDir tmp;
  fs::copy_file(kMini, tmp / "dataset.jsonl");
  fs::copy_file(kData + "/timelines.jsonl", tmp / "timelines.jsonl");
  setenv("PATCHTRACE_DATA", tmp.path.c_str(), 1);
  const auto s = run({"stats"});
  CHECK(s.code == 0);
  CHECK(json::parse(s.out).at("n_commits") == 12);
  CHECK(run({"rank"}).code == 0);
  CHECK(run({"session-build", "--session-id", "envsess", "--groups", "1", "--seed", "1"}).code == 0);
  CHECK(fs::exists(tmp.path / "sessions" / "envsess" / "manifest.jsonl"));
  CHECK(run({"report", "--session-id", "envsess"}).code == 0);
}
