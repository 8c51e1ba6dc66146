#pragma once

// JSON-over-HTTP service for the query workbench.
//
//   GET  /events
//   GET  /events/{id}/messages?informative=true&lang=xx&offset=0&limit=50
//   GET  /queries, GET /queries/{id}
//   POST /queries     {"id"?: str, "query": Query}  (a bare Query object is accepted too)
//   POST /rank        {"query_id", "event_id", "k"?}
//   POST /summarize   {"query_id", "event_id", "mode"?, "budget"?, "k"?}

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "crisisscope/error.hpp"
#include "crisisscope/session.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace crisisscope {

class Service {
 public:
  explicit Service(std::shared_ptr<Session> session, std::chrono::milliseconds timeout = {})
      : session_(std::move(session)),
        timeout_(timeout.count() > 0 ? timeout
                                     : std::chrono::milliseconds(
                                           static_cast<long>(session_->config().request_timeout_s * 1000))) {
    routes();
  }

  ~Service() {
    stop();
    std::unique_lock lock(jobs_mutex_);
    jobs_done_.wait(lock, [&] { return jobs_ == 0; });
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to an OS-chosen port when `port` is 0; returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  void listen() { server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  using Json = nlohmann::ordered_json;

  void reply(httplib::Response& res, int status, Json body) const {
    body["seed"] = session_->config().seed;
    body["backends"] = session_->backends_json();
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  void fail(httplib::Response& res, int status, const std::string& message) const {
    Json body;
    body["error"] = message;
    reply(res, status, std::move(body));
  }

  /// Runs `fn`, mapping exceptions onto status codes.
  void guarded(httplib::Response& res, const std::function<void()>& fn) const {
    try {
      fn();
    } catch (const NotFoundError& e) {
      fail(res, 404, e.what());
    } catch (const ValidationError& e) {
      fail(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, std::string("malformed request: ") + e.what());
    } catch (const BackendError& e) {
      res.set_header("Retry-After", "5");
      fail(res, 503, e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  }

  /// Runs a slow job with the request timeout; on timeout answers 503 and
  /// lets the job finish in the background.
  template <typename Fn>
  Json with_timeout(Fn fn) {
    auto task = std::make_shared<std::packaged_task<Json()>>(std::move(fn));
    auto fut = task->get_future();
    {
      std::lock_guard lock(jobs_mutex_);
      ++jobs_;
    }
    std::thread([this, task] {
      (*task)();
      std::lock_guard lock(jobs_mutex_);
      if (--jobs_ == 0) jobs_done_.notify_all();
    }).detach();
    if (fut.wait_for(timeout_) != std::future_status::ready) {
      throw BackendError("request timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    return fut.get();
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw SchemaError("request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(std::string("request body is not JSON: ") + e.what());
    }
  }

  static std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw SchemaError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
  }

  static std::size_t optional_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer() || j[key].get<long long>() < 1) {
      throw SchemaError(std::string("'") + key + "' must be a positive integer");
    }
    return j[key].get<std::size_t>();
  }

  void routes() {
    server_.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        Json list = Json::array();
        for (const auto& e : session_->events()) {
          std::size_t informative = 0;
          for (const auto& m : e.messages()) informative += m.informative.value_or(false) ? 1 : 0;
          Json row;
          row["id"] = e.event_id();
          row["name"] = e.name();
          row["count"] = e.size();
          row["informative"] = informative;
          row["languages"] = e.languages();
          list.push_back(std::move(row));
        }
        Json body;
        body["events"] = std::move(list);
        reply(res, 200, std::move(body));
      });
    });

    server_.Get(R"(/events/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto& ev = session_->event(req.matches[1]);
        std::optional<bool> informative;
        if (req.has_param("informative")) {
          const auto v = req.get_param_value("informative");
          if (v != "true" && v != "false") throw SchemaError("informative must be true or false");
          informative = v == "true";
        }
        const std::string lang = req.has_param("lang") ? req.get_param_value("lang") : "";
        auto number = [&](const char* key, std::size_t fallback) -> std::size_t {
          if (!req.has_param(key)) return fallback;
          try {
            return std::stoul(req.get_param_value(key));
          } catch (const std::exception&) {
            throw SchemaError(std::string(key) + " must be a non-negative integer");
          }
        };
        const std::size_t offset = number("offset", 0);
        const std::size_t limit = std::min<std::size_t>(number("limit", 50), 1000);
        Json page = Json::array();
        std::size_t total = 0;
        for (const auto& m : ev.messages()) {
          if (informative && m.informative.value_or(false) != *informative) continue;
          if (!lang.empty() && m.lang != lang) continue;
          if (total >= offset && page.size() < limit) page.push_back(message_to_json(m));
          ++total;
        }
        Json body;
        body["event_id"] = ev.event_id();
        body["total"] = total;
        body["offset"] = offset;
        body["limit"] = limit;
        body["messages"] = std::move(page);
        reply(res, 200, std::move(body));
      });
    });

    server_.Get("/queries", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        Json list = Json::array();
        for (const auto& [id, q] : session_->queries()) {
          Json row;
          row["id"] = id;
          row["query"] = query_to_json(q);
          list.push_back(std::move(row));
        }
        Json body;
        body["queries"] = std::move(list);
        reply(res, 200, std::move(body));
      });
    });

    server_.Get(R"(/queries/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        Json body;
        body["id"] = req.matches[1];
        body["query"] = query_to_json(session_->query(req.matches[1]));
        reply(res, 200, std::move(body));
      });
    });

    server_.Post("/queries", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = parse_body(req);
        std::optional<std::string> id;
        if (j.contains("id")) {
          if (!j["id"].is_string()) throw SchemaError("'id' must be a string");
          id = j["id"].get<std::string>();
          if (id->find('/') != std::string::npos) throw SchemaError("'id' must not contain '/'");
        }
        auto q = query_from_json(j.contains("query") ? j["query"] : j);
        const auto [qid, created] = session_->upsert_query(id, std::move(q));
        Json body;
        body["id"] = qid;
        body["created"] = created;
        reply(res, created ? 201 : 200, std::move(body));
      });
    });

    server_.Post("/rank", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = parse_body(req);
        const auto q = session_->query(required_string(j, "query_id"));
        const auto event_id = required_string(j, "event_id");
        session_->event(event_id);
        const auto k = optional_count(j, "k", session_->config().k);
        auto body = with_timeout([session = std::shared_ptr<const Session>(session_), q, event_id, k] {
          const auto result = session->rank(q, event_id, k);
          Json b;
          b["query_id"] = nullptr;
          b["event_id"] = event_id;
          b["k"] = k;
          Json rows = Json::array();
          for (const auto& c : result.candidates) rows.push_back(ranked_candidate_to_json(c));
          b["candidates"] = std::move(rows);
          b["considered"] = result.considered;
          b["exact_duplicates_removed"] = result.exact_duplicates_removed;
          b["near_duplicates_removed"] = result.near_duplicates_removed;
          return b;
        });
        body["query_id"] = j["query_id"];
        reply(res, 200, std::move(body));
      });
    });

    server_.Post("/summarize", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = parse_body(req);
        const auto q = session_->query(required_string(j, "query_id"));
        const auto event_id = required_string(j, "event_id");
        session_->event(event_id);
        const auto mode = j.contains("mode") ? parse_summary_mode(required_string(j, "mode"))
                                             : session_->config().summary.mode;
        const auto budget = optional_count(j, "budget", session_->config().summary.budget);
        const auto k = optional_count(j, "k", session_->config().k);
        auto body = with_timeout([session = std::shared_ptr<const Session>(session_), q, event_id, mode, budget, k] {
          Json b = summary_to_json(session->summarize(q, event_id, mode, budget, k));
          b["event_id"] = event_id;
          return b;
        });
        body["query_id"] = j["query_id"];
        reply(res, 200, std::move(body));
      });
    });
  }

  std::shared_ptr<Session> session_;
  std::chrono::milliseconds timeout_;
  httplib::Server server_;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_done_;
  std::size_t jobs_ = 0;
};

}  // namespace crisisscope
