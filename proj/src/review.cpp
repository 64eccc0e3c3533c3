#include "patchtrace/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <tuple>

namespace patchtrace::review {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Protocol p) noexcept { return p == Protocol::easy ? "easy" : "hard"; }

std::optional<Protocol> parse_protocol(std::string_view s) noexcept {
  if (s == "easy") return Protocol::easy;
  if (s == "hard") return Protocol::hard;
  return std::nullopt;
}

std::size_t group_size(Protocol p) noexcept { return p == Protocol::easy ? 2 : 4; }

bool is_doc_file(std::string_view path) {
  const auto slash = path.find_last_of('/');
  const std::string name = text::fold(slash == std::string_view::npos ? path : path.substr(slash + 1));
  const auto dot = name.find_last_of('.');
  const std::string stem = dot == std::string::npos ? name : name.substr(0, dot);
  if (stem == "changelog" || stem == "readme") return true;
  if (dot == std::string::npos) return false;
  const std::string ext = name.substr(dot);
  return ext == ".txt" || ext == ".md" || ext == ".rst" || ext == ".adoc";
}

bool doc_only(const corpus::CommitRecord& commit) {
  return !commit.files.empty() &&
         std::all_of(commit.files.begin(), commit.files.end(), [](const auto& f) { return is_doc_file(f); });
}

Highlight to_raw(const Highlight& h, const text::Normalized& normalized, std::string_view raw) {
  Highlight out{h.field, h.method, {}};
  const auto& off = normalized.source_offsets;
  for (const auto& it : h.items) {
    const auto& s = it.span;
    if (s.start >= s.end || s.end > normalized.text.size()) throw Error("highlight span outside its field");
    auto item = it;
    item.span.start = off[s.start];
    item.span.end = off[s.end - 1] + 1;
    item.span.text = std::string(raw.substr(item.span.start, item.span.end - item.span.start));
    out.items.push_back(std::move(item));
  }
  return out;
}

ReviewSession build_session(const corpus::Dataset& dataset, std::span<const rank::RankedList> ranked,
                            const HighlightFn& highlights, const SessionConfig& config) {
  if (!valid_session_id(config.session_id)) throw Error("invalid session id '" + config.session_id + "'");
  if (config.methods.empty()) throw Error("session needs at least one method");
  const std::size_t m = group_size(config.protocol);

  std::map<std::string, const rank::RankedList*> by_cve;
  for (const auto& l : ranked) by_cve[l.cve_id] = &l;

  std::mt19937_64 rng(config.seed);
  std::vector<const corpus::CveRecord*> order;
  for (const auto& c : dataset.cves) order.push_back(&c);
  std::shuffle(order.begin(), order.end(), rng);

  struct Pick {
    const corpus::CveRecord* cve;
    std::vector<const corpus::CommitRecord*> commits;  // patch first
  };
  std::vector<Pick> picks;
  std::size_t eligible = 0;
  for (const auto* cve : order) {
    if (picks.size() == config.n_groups) break;
    auto it = by_cve.find(cve->cve_id);
    if (it == by_cve.end() || !cve->patch_commit) continue;
    const auto& raw = dataset.commits_of(cve->cve_id);
    auto find_raw = [&raw](const std::string& id) -> const corpus::CommitRecord* {
      for (const auto& c : raw) {
        if (c.commit_id == id) return &c;
      }
      return nullptr;
    };
    Pick pick{cve, {}};
    const auto* patch = find_raw(*cve->patch_commit);
    if (!patch) continue;
    pick.commits.push_back(patch);
    for (const auto& e : it->second->entries) {
      if (pick.commits.size() == m) break;
      if (e.commit_id == *cve->patch_commit) continue;
      if (const auto* c = find_raw(e.commit_id)) pick.commits.push_back(c);
    }
    if (pick.commits.size() < m) continue;
    ++eligible;
    if (config.protocol == Protocol::hard &&
        std::any_of(pick.commits.begin(), pick.commits.end(), [](const auto* c) { return doc_only(*c); })) {
      continue;
    }
    picks.push_back(std::move(pick));
  }
  if (picks.size() < config.n_groups) {
    throw Error("only " + std::to_string(picks.size()) + " eligible CVEs for " + std::to_string(config.n_groups) +
                " groups (short by " + std::to_string(config.n_groups - picks.size()) + "; " +
                std::to_string(eligible) + " had enough candidates before filtering)");
  }

  auto methods = config.methods;
  std::shuffle(methods.begin(), methods.end(), rng);

  ReviewSession session{config, {}};
  for (std::size_t g = 0; g < picks.size(); ++g) {
    const auto& pick = picks[g];
    ReviewGroup group;
    char id[32];
    std::snprintf(id, sizeof id, "g%04zu", g + 1);
    group.group_id = id;
    group.cve_id = pick.cve->cve_id;
    group.description = pick.cve->description;
    group.method = methods[g % methods.size()];
    group.protocol = config.protocol;
    std::vector<std::size_t> perm(pick.commits.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t slot = 0; slot < perm.size(); ++slot) {
      const auto* c = pick.commits[perm[slot]];
      if (perm[slot] == 0) group.patch_index = slot;
      GroupCommit gc{c->commit_id, c->message, c->diff, {}};
      if (group.method != Method::none) gc.highlights = highlights(*pick.cve, *c, group.method);
      group.commits.push_back(std::move(gc));
    }
    session.groups.push_back(std::move(group));
  }
  return session;
}

bool valid_session_id(std::string_view id) noexcept {
  return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

json to_json(const LabelRecord& r) {
  return {{"group_id", r.group_id},
          {"annotator", r.annotator},
          {"round", r.round},
          {"choice", r.choice},
          {"helpfulness", r.helpfulness ? json(*r.helpfulness) : json(nullptr)},
          {"changed_from_round1", r.changed_from_round1},
          {"timestamp", r.timestamp}};
}

LabelRecord label_from_json(const json& j) {
  LabelRecord r;
  r.group_id = j.at("group_id").get<std::string>();
  r.annotator = j.at("annotator").get<std::string>();
  r.round = j.at("round").get<int>();
  r.choice = j.at("choice").get<std::string>();
  if (j.contains("helpfulness") && !j["helpfulness"].is_null()) r.helpfulness = j["helpfulness"].get<int>();
  r.changed_from_round1 = j.value("changed_from_round1", false);
  r.timestamp = j.value("timestamp", std::int64_t{0});
  return r;
}

json session_to_json(const SessionConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(highlight::to_string(m));
  return {{"kind", "session"},      {"session_id", c.session_id}, {"protocol", to_string(c.protocol)},
          {"n_groups", c.n_groups}, {"seed", c.seed},             {"methods", methods}};
}

namespace {

SessionConfig session_from_json(const json& j) {
  SessionConfig c;
  c.session_id = j.at("session_id").get<std::string>();
  const auto p = parse_protocol(j.at("protocol").get<std::string>());
  if (!p) throw ParseError(1, "unknown protocol");
  c.protocol = *p;
  c.n_groups = j.at("n_groups").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.methods.clear();
  for (const auto& m : j.at("methods")) {
    const auto pm = highlight::parse_method(m.get<std::string>());
    if (!pm) throw ParseError(1, "unknown method");
    c.methods.push_back(*pm);
  }
  return c;
}

}  // namespace

json group_to_json(const ReviewGroup& g) {
  json commits = json::array();
  for (const auto& c : g.commits) {
    json hs = json::array();
    for (const auto& h : c.highlights) hs.push_back(highlight::to_json(h));
    commits.push_back({{"commit_id", c.commit_id}, {"message", c.message}, {"diff", c.diff}, {"highlights", hs}});
  }
  return {{"kind", "group"},
          {"group_id", g.group_id},
          {"cve_id", g.cve_id},
          {"description", g.description},
          {"method", highlight::to_string(g.method)},
          {"patch_index", g.patch_index},
          {"protocol", to_string(g.protocol)},
          {"commits", commits}};
}

ReviewGroup group_from_json(const json& j) {
  ReviewGroup g;
  g.group_id = j.at("group_id").get<std::string>();
  g.cve_id = j.at("cve_id").get<std::string>();
  g.description = j.at("description").get<std::string>();
  const auto m = highlight::parse_method(j.at("method").get<std::string>());
  const auto p = parse_protocol(j.at("protocol").get<std::string>());
  if (!m || !p) throw Error("group " + g.group_id + ": unknown method or protocol");
  g.method = *m;
  g.protocol = *p;
  g.patch_index = j.at("patch_index").get<std::size_t>();
  for (const auto& c : j.at("commits")) {
    GroupCommit gc{c.at("commit_id").get<std::string>(), c.at("message").get<std::string>(),
                   c.at("diff").get<std::string>(), {}};
    for (const auto& h : c.at("highlights")) gc.highlights.push_back(highlight::highlight_from_json(h));
    g.commits.push_back(std::move(gc));
  }
  if (g.patch_index >= g.commits.size()) throw Error("group " + g.group_id + ": patch index out of range");
  return g;
}

namespace {

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void write_synced(const fs::path& path, const std::string& data, bool append) {
  const int flags = O_WRONLY | O_CREAT | (append ? O_APPEND : O_TRUNC);
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw Error("cannot open " + path.string());
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      ::close(fd);
      throw Error("write failed on " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw Error("fsync failed on " + path.string());
}

std::vector<json> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(n, path.filename().string() + ": " + e.what());
    }
  }
  return out;
}

// Payload form of a highlight: offsets and text only.
json blind_highlight(const Highlight& h) {
  json items = json::array();
  for (const auto& it : h.items) {
    items.push_back({{"start", it.span.start}, {"end", it.span.end}, {"text", it.span.text}});
  }
  return {{"field", highlight::to_string(h.field)}, {"items", items}};
}

}  // namespace

SessionStore::SessionStore(std::string path, ReviewSession session, Clock clock)
    : path_(std::move(path)), session_(std::move(session)), clock_(clock ? std::move(clock) : Clock(now_ms)) {}

std::unique_ptr<SessionStore> SessionStore::create(const std::string& dir, const ReviewSession& session,
                                                   Clock clock) {
  if (!valid_session_id(session.config.session_id)) throw Error("invalid session id");
  const fs::path root = fs::path(dir) / session.config.session_id;
  fs::create_directories(root);
  if (fs::exists(root / "manifest.jsonl")) throw Error("session " + session.config.session_id + " already exists");
  std::string manifest = session_to_json(session.config).dump() + "\n";
  for (const auto& g : session.groups) manifest += group_to_json(g).dump() + "\n";
  write_synced(root / "manifest.jsonl.tmp", manifest, false);
  fs::rename(root / "manifest.jsonl.tmp", root / "manifest.jsonl");
  write_synced(root / "labels.jsonl", "", true);
  return std::unique_ptr<SessionStore>(new SessionStore(root.string(), session, std::move(clock)));
}

std::unique_ptr<SessionStore> SessionStore::open(const std::string& dir, const std::string& session_id,
                                                 Clock clock) {
  if (!valid_session_id(session_id)) throw Error("invalid session id");
  const fs::path root = fs::path(dir) / session_id;
  const auto lines = read_lines(root / "manifest.jsonl");
  if (lines.empty() || lines[0].value("kind", "") != "session") {
    throw ParseError(1, "manifest must start with a session record");
  }
  ReviewSession session{session_from_json(lines[0]), {}};
  for (std::size_t i = 1; i < lines.size(); ++i) session.groups.push_back(group_from_json(lines[i]));
  std::unique_ptr<SessionStore> store(new SessionStore(root.string(), std::move(session), std::move(clock)));
  if (fs::exists(root / "labels.jsonl")) {
    for (const auto& j : read_lines(root / "labels.jsonl")) store->log_.push_back(label_from_json(j));
  }
  return store;
}

const ReviewGroup* SessionStore::find_group(const std::string& group_id) const {
  for (const auto& g : session_.groups) {
    if (g.group_id == group_id) return &g;
  }
  return nullptr;
}

const LabelRecord* SessionStore::latest(const std::string& group_id, const std::string& annotator, int round) const {
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    if (it->group_id == group_id && it->annotator == annotator && it->round == round) return &*it;
  }
  return nullptr;
}

json SessionStore::next_group(const std::string& annotator, int round) const {
  std::shared_lock lock(mu_);
  const auto protocol = session_.config.protocol;
  if (annotator.empty()) throw Rejection("annotator is required");
  if (round != 1 && !(round == 2 && protocol == Protocol::hard)) {
    throw Rejection("round " + std::to_string(round) + " is not valid for the " + std::string(to_string(protocol)) +
                    " protocol");
  }
  std::size_t labeled = 0;
  const ReviewGroup* next = nullptr;
  const LabelRecord* first = nullptr;
  for (const auto& g : session_.groups) {
    if (latest(g.group_id, annotator, round)) {
      ++labeled;
      continue;
    }
    if (next) continue;
    if (round == 2) {
      const auto* r1 = latest(g.group_id, annotator, 1);
      if (!r1) continue;
      first = r1;
    }
    next = &g;
  }
  json progress = {{"labeled", labeled}, {"total", session_.groups.size()}};
  if (!next) return {{"done", true}, {"round", round}, {"progress", progress}};

  const bool show_message = protocol == Protocol::easy || round == 2;
  json commits = json::array();
  for (const auto& c : next->commits) {
    json card = {{"commit_id", c.commit_id}, {"diff", c.diff}};
    if (show_message) card["message"] = c.message;
    if (next->method != Method::none) {
      json hs = json::array();
      for (const auto& h : c.highlights) {
        if (h.field == highlight::Field::message && !show_message) continue;
        hs.push_back(blind_highlight(h));
      }
      card["highlights"] = hs;
    }
    commits.push_back(std::move(card));
  }
  json view = {{"done", false},
               {"session_id", session_.config.session_id},
               {"group_id", next->group_id},
               {"round", round},
               {"protocol", to_string(protocol)},
               {"cve_id", next->cve_id},
               {"description", next->description},
               {"commits", commits},
               {"requires_helpfulness", next->method != Method::none},
               {"progress", progress}};
  if (first) view["round1_choice"] = first->choice;
  return view;
}

json SessionStore::record_label(const json& submission) {
  LabelRecord r;
  try {
    r.group_id = submission.at("group_id").get<std::string>();
    r.annotator = submission.at("annotator").get<std::string>();
    r.round = submission.value("round", 1);
    r.choice = submission.at("choice").get<std::string>();
    if (submission.contains("helpfulness") && !submission["helpfulness"].is_null()) {
      r.helpfulness = submission["helpfulness"].get<int>();
    }
  } catch (const json::exception& e) {
    throw Rejection(std::string("malformed label: ") + e.what());
  }
  std::unique_lock lock(mu_);
  // "total" names the pooled report rows; '~' prefixes their sort keys.
  if (r.annotator.empty() || r.annotator == "total" || r.annotator.front() == '~') {
    throw Rejection("invalid annotator id");
  }
  const auto* g = find_group(r.group_id);
  if (!g) throw Rejection("unknown group " + r.group_id);
  const auto protocol = session_.config.protocol;
  if (r.round != 1 && !(r.round == 2 && protocol == Protocol::hard)) {
    throw Rejection("round " + std::to_string(r.round) + " is not valid for the " +
                    std::string(to_string(protocol)) + " protocol");
  }
  if (std::none_of(g->commits.begin(), g->commits.end(), [&](const auto& c) { return c.commit_id == r.choice; })) {
    throw Rejection("commit " + r.choice + " is not in group " + r.group_id);
  }
  if (g->method == Method::none) {
    if (r.helpfulness) throw Rejection("helpfulness is not collected for this group");
  } else if (!r.helpfulness) {
    throw Rejection("helpfulness is required for this group");
  } else if (*r.helpfulness < 1 || *r.helpfulness > 3) {
    throw Rejection("helpfulness must be 1, 2 or 3");
  }
  if (r.round == 2) {
    const auto* r1 = latest(r.group_id, r.annotator, 1);
    if (!r1) throw Rejection("round 1 label missing for group " + r.group_id);
    r.changed_from_round1 = r1->choice != r.choice;
  }
  r.timestamp = clock_();
  append(r);
  json ack = {{"status", "ok"}, {"group_id", r.group_id}, {"round", r.round}};
  if (protocol == Protocol::hard) ack["changed_from_round1"] = r.changed_from_round1;
  return ack;
}

void SessionStore::append(const LabelRecord& r) {
  write_synced(fs::path(path_) / "labels.jsonl", to_json(r).dump() + "\n", true);
  log_.push_back(r);
}

std::vector<LabelRecord> SessionStore::label_log() const {
  std::shared_lock lock(mu_);
  return log_;
}

Report SessionStore::report() const {
  std::shared_lock lock(mu_);
  std::map<std::tuple<std::string, std::string, int>, const LabelRecord*> effective;
  for (const auto& r : log_) effective[{r.group_id, r.annotator, r.round}] = &r;

  struct Cell {
    std::size_t n = 0, correct = 0, n_help = 0;
    double help = 0;
  };
  // Pooled keys sort after real ones: annotator "~total", method "~all".
  std::map<std::tuple<std::string, int, std::string>, Cell> cells;
  auto method_key = [](Method m) {
    switch (m) {
      case Method::tfidf: return std::string("0tfidf");
      case Method::lime: return std::string("1lime");
      case Method::none: break;
    }
    return std::string("2none");
  };
  for (const auto& [key, r] : effective) {
    const auto* g = find_group(r->group_id);
    if (!g) continue;
    const bool correct = g->commits[g->patch_index].commit_id == r->choice;
    for (const std::string& a : {r->annotator, std::string("~total")}) {
      for (const std::string& m : {method_key(g->method), std::string("~all")}) {
        auto& c = cells[{a, r->round, m}];
        ++c.n;
        c.correct += correct ? 1 : 0;
        if (r->helpfulness) {
          ++c.n_help;
          c.help += *r->helpfulness;
        }
      }
    }
  }
  Report rep;
  rep.session_id = session_.config.session_id;
  rep.n_labels = effective.size();
  for (const auto& [key, c] : cells) {
    const auto& [a, round, m] = key;
    ReportRow row;
    row.annotator = a == "~total" ? "total" : a;
    row.method = m == "~all" ? "all" : m.substr(1);
    row.round = round;
    row.n = c.n;
    row.correct = c.correct;
    row.accuracy = static_cast<double>(c.correct) / static_cast<double>(c.n);
    row.n_helpfulness = c.n_help;
    if (c.n_help > 0) row.helpfulness = c.help / static_cast<double>(c.n_help);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

json to_json(const Report& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"annotator", row.annotator},
                    {"method", row.method},
                    {"round", row.round},
                    {"n", row.n},
                    {"correct", row.correct},
                    {"accuracy", row.accuracy},
                    {"n_helpfulness", row.n_helpfulness},
                    {"helpfulness", row.helpfulness ? json(*row.helpfulness) : json(nullptr)}});
  }
  return {{"session_id", r.session_id}, {"n_labels", r.n_labels}, {"rows", rows}};
}

std::string report_tsv(const Report& r) {
  std::string out = "annotator\tmethod\tround\tn\tcorrect\taccuracy\tn_helpfulness\thelpfulness\n";
  char buf[64];
  for (const auto& row : r.rows) {
    out += row.annotator + "\t" + row.method + "\t" + std::to_string(row.round) + "\t" + std::to_string(row.n) +
           "\t" + std::to_string(row.correct) + "\t";
    std::snprintf(buf, sizeof buf, "%.4f", row.accuracy);
    out += buf;
    out += "\t" + std::to_string(row.n_helpfulness) + "\t";
    if (row.helpfulness) {
      std::snprintf(buf, sizeof buf, "%.4f", *row.helpfulness);
      out += buf;
    } else {
      out += "-";
    }
    out += "\n";
  }
  return out;
}

json SessionStore::export_json() const {
  std::shared_lock lock(mu_);
  json groups = json::array();
  for (const auto& g : session_.groups) groups.push_back(group_to_json(g));
  json labels = json::array();
  for (const auto& r : log_) labels.push_back(to_json(r));
  return {{"session", session_to_json(session_.config)}, {"groups", groups}, {"labels", labels}};
}

}  // namespace patchtrace::review
