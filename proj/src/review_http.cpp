#include <map>
#include <mutex>

#include "httplib.h"
#include "patchtrace/review.hpp"

namespace patchtrace::review {

using nlohmann::json;

struct Server::Impl {
  std::string dir;
  std::string admin_token;
  httplib::Server http;
  std::mutex mu;
  std::map<std::string, std::unique_ptr<SessionStore>> stores;

  SessionStore* store(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = stores.find(id);
    if (it != stores.end()) return it->second.get();
    if (!valid_session_id(id)) return nullptr;
    try {
      auto s = SessionStore::open(dir, id);
      return (stores[id] = std::move(s)).get();
    } catch (const Error&) {
      return nullptr;
    }
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  bool admin(const httplib::Request& req, httplib::Response& res) const {
    if (admin_token.empty() || req.get_header_value("X-Admin-Token") != admin_token) {
      reply(res, 403, {{"error", "admin token required"}});
      return false;
    }
    return true;
  }

  void routes() {
    http.Get(R"(/session/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = store(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      int round = 1;
      if (req.has_param("round")) {
        try {
          round = std::stoi(req.get_param_value("round"));
        } catch (const std::exception&) {
          return reply(res, 400, {{"error", "round must be an integer"}});
        }
      }
      try {
        reply(res, 200, s->next_group(req.get_param_value("annotator"), round));
      } catch (const Rejection& e) {
        reply(res, 400, {{"error", e.what()}});
      }
    });
    http.Post(R"(/session/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = store(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        return reply(res, 400, {{"error", "body is not valid JSON"}});
      }
      try {
        reply(res, 200, s->record_label(body));
      } catch (const Rejection& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const Error& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    });
    http.Get(R"(/session/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!admin(req, res)) return;
      auto* s = store(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      reply(res, 200, to_json(s->report()));
    });
    http.Get(R"(/session/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!admin(req, res)) return;
      auto* s = store(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      reply(res, 200, s->export_json());
    });
  }
};

Server::Server(std::string dir, std::string admin_token) : impl_(std::make_unique<Impl>()) {
  impl_->dir = std::move(dir);
  impl_->admin_token = std::move(admin_token);
  impl_->routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool Server::serve() { return impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace patchtrace::review
