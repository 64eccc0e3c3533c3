#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "patchtrace/corpus.hpp"
#include "patchtrace/error.hpp"
#include "patchtrace/highlight.hpp"
#include "patchtrace/ranker.hpp"
#include "patchtrace/tokenizer.hpp"

namespace patchtrace::review {

using highlight::Highlight;
using highlight::Method;

enum class Protocol { easy, hard };
std::string_view to_string(Protocol p) noexcept;
std::optional<Protocol> parse_protocol(std::string_view s) noexcept;

/// 2 for easy, 4 for hard.
std::size_t group_size(Protocol p) noexcept;

/// Extensions .txt .md .rst .adoc, or a file named CHANGELOG or README
/// (with or without extension), case-insensitive.
bool is_doc_file(std::string_view path);
/// True when the commit lists files and every one is documentation.
bool doc_only(const corpus::CommitRecord& commit);

struct GroupCommit {
  std::string commit_id;
  std::string message;  // raw text
  std::string diff;     // raw text
  std::vector<Highlight> highlights;  // offsets into the raw fields
};

struct ReviewGroup {
  std::string group_id;
  std::string cve_id;
  std::string description;
  std::vector<GroupCommit> commits;  // shuffled
  Method method = Method::none;
  std::size_t patch_index = 0;
  Protocol protocol = Protocol::easy;
};

struct SessionConfig {
  std::string session_id;
  Protocol protocol = Protocol::easy;
  std::size_t n_groups = 0;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::tfidf, Method::lime, Method::none};
};

struct ReviewSession {
  SessionConfig config;
  std::vector<ReviewGroup> groups;
};

/// Highlights for one commit under one method, offsets into the raw text.
using HighlightFn =
    std::function<std::vector<Highlight>(const corpus::CveRecord&, const corpus::CommitRecord&, Method)>;

/// Picks CVEs in a seeded order. A CVE is eligible when its ranked list
/// holds the patch and at least m-1 other commits; distractors are the
/// top-ranked non-patch commits. Under the hard protocol a group with any
/// doc-only commit is dropped. Throws Error naming the shortfall when fewer
/// than n_groups CVEs qualify.
ReviewSession build_session(const corpus::Dataset& dataset, std::span<const rank::RankedList> ranked,
                            const HighlightFn& highlights, const SessionConfig& config);

/// Maps a highlight on normalized text back onto the raw text. Item text
/// becomes the raw slice.
Highlight to_raw(const Highlight& h, const text::Normalized& normalized, std::string_view raw);

struct LabelRecord {
  std::string group_id;
  std::string annotator;
  int round = 1;
  std::string choice;
  std::optional<int> helpfulness;
  bool changed_from_round1 = false;
  std::int64_t timestamp = 0;  // ms since epoch
};

nlohmann::json to_json(const LabelRecord& r);
LabelRecord label_from_json(const nlohmann::json& j);

/// A submitted label that breaks a protocol rule.
class Rejection : public Error {
 public:
  using Error::Error;
};

struct ReportRow {
  std::string annotator;  // "total" for rows pooled over annotators
  std::string method;     // "all" for rows pooled over methods
  int round = 1;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  std::size_t n_helpfulness = 0;
  std::optional<double> helpfulness;
};

struct Report {
  std::string session_id;
  std::size_t n_labels = 0;  // effective labels, last write per key
  std::vector<ReportRow> rows;
};

nlohmann::json to_json(const Report& r);
std::string report_tsv(const Report& r);

/// File-backed session: <dir>/<session_id>/manifest.jsonl (written once)
/// and labels.jsonl (append-only; synced before a label is acknowledged).
/// Views read under a shared lock; labels serialize under the exclusive one.
class SessionStore {
 public:
  using Clock = std::function<std::int64_t()>;

  /// Throws Error when the session directory already holds a manifest.
  static std::unique_ptr<SessionStore> create(const std::string& dir, const ReviewSession& session,
                                              Clock clock = {});
  static std::unique_ptr<SessionStore> open(const std::string& dir, const std::string& session_id,
                                            Clock clock = {});

  const ReviewSession& session() const noexcept { return session_; }

  /// Next unlabeled group for the annotator in sequential order, or
  /// {"done": true, ...}. The payload never carries the method or the
  /// patch position. Throws Rejection for an invalid round.
  nlohmann::json next_group(const std::string& annotator, int round) const;

  /// Validates, persists, then returns the acknowledgement. Throws
  /// Rejection with the reason.
  nlohmann::json record_label(const nlohmann::json& submission);

  Report report() const;
  /// Manifest plus the full label log, audit entries included.
  nlohmann::json export_json() const;

  std::vector<LabelRecord> label_log() const;

 private:
  SessionStore(std::string path, ReviewSession session, Clock clock);
  const ReviewGroup* find_group(const std::string& group_id) const;
  const LabelRecord* latest(const std::string& group_id, const std::string& annotator, int round) const;
  void append(const LabelRecord& r);

  std::string path_;
  ReviewSession session_;
  Clock clock_;
  std::vector<LabelRecord> log_;
  mutable std::shared_mutex mu_;
};

nlohmann::json session_to_json(const SessionConfig& c);
nlohmann::json group_to_json(const ReviewGroup& g);
ReviewGroup group_from_json(const nlohmann::json& j);

/// Session ids are restricted to [A-Za-z0-9_-]+ so they are safe as
/// directory names.
bool valid_session_id(std::string_view id) noexcept;

/// HTTP front end. Routes:
///   GET  /session/{id}/next?annotator=&round=
///   POST /session/{id}/label
///   GET  /session/{id}/report   (X-Admin-Token)
///   GET  /session/{id}/export   (X-Admin-Token)
class Server {
 public:
  Server(std::string dir, std::string admin_token);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds; returns the port (an ephemeral one when port is 0), or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace patchtrace::review
