#include "crowdmod/service.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "crowdmod/metrics.hpp"
#include "httplib.h"

namespace crowdmod {

using nlohmann::json;

namespace {

json interval_json(const Interval& iv) {
  return {{"start_s", static_cast<double>(iv.start.count()) / 1000.0},
          {"end_s", static_cast<double>(iv.end.count()) / 1000.0}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status_for(code), {{"error", to_string(code)}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("invalid JSON body: ") + e.what());
  }
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad field '") + key + "'");
  }
}

}  // namespace

json decision_to_json(const Decision& d) {
  json segments = json::array();
  for (const auto& s : d.segments) {
    segments.push_back({{"segment_id", s.segment_id},
                        {"interval", interval_json(s.interval)},
                        {"short", s.short_segment},
                        {"verdict", to_string(s.verdict)},
                        {"provisional", s.provisional ? json(to_string(*s.provisional)) : json(nullptr)},
                        {"votes", s.votes},
                        {"quorum", s.quorum}});
  }
  return {{"video_id", d.video_id}, {"status", to_string(d.status)}, {"segments", segments}};
}

json offer_to_json(const TaskOffer& offer, Timestamp now) {
  json j = {{"segment_id", offer.segment_id}, {"video_id", offer.video_id}, {"interval", interval_json(offer.interval)}};
  if (offer.deadline) {
    j["deadline_ms"] = to_ms(*offer.deadline);
    j["countdown_s"] = std::max<double>(0.0, static_cast<double>((*offer.deadline - now).count()) / 1000.0);
  } else {
    j["deadline_ms"] = nullptr;
    j["countdown_s"] = nullptr;
  }
  return j;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
    case ErrorCode::Malformed:
      return 400;
    case ErrorCode::Unassigned: return 403;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Duplicate:
    case ErrorCode::Terminal:
      return 409;
    case ErrorCode::ClockRegression:
    case ErrorCode::SeqGap:
      return 500;
  }
  return 500;
}

Timestamp Service::wall_clock() {
  using namespace std::chrono;
  return at_ms(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

struct Service::Impl {
  Engine& engine;
  Clock clock;
  httplib::Server server;
  int port = -1;
  std::atomic<bool> stopping{false};
  std::mutex mu;
  std::condition_variable cv;

  Impl(Engine& e, Clock c) : engine(e), clock(std::move(c)) {
    // The library default shares ports between listeners; a second server must fail instead.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  template <class F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  void routes() {
    // The browser console may be served from another origin.
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Expose-Headers", "X-Next-Eligible-At"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Post("/videos", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto id = field<std::string>(body, "id");
      const auto duration = seconds_to_millis(field<double>(body, "duration_s"));
      const std::string locale = body.value("locale", "");
      send_json(res, 201, decision_to_json(engine.ingest_video(id, duration, locale, clock())));
    }));

    server.Post("/workers", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto id = field<std::string>(body, "id");
      const auto identity = parse_identity_class(body.value("identity_class", "unsigned"));
      const std::string locale = body.value("locale", "");
      engine.register_worker(id, identity, locale, clock());
      send_json(res, 201, {{"id", id}, {"identity_class", to_string(identity)}, {"locale", locale}});
    }));

    server.Get(R"(/workers/([^/]+)/tasks)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string worker = req.matches[1];
      const Timestamp now = clock();
      if (auto offer = engine.next_task(worker)) {
        send_json(res, 200, offer_to_json(*offer, now));
        return;
      }
      if (auto eligible = engine.next_eligible_at(worker); eligible && *eligible > now) {
        res.set_header("X-Next-Eligible-At", std::to_string(to_ms(*eligible)));
      }
      res.status = 204;
    }));

    server.Post("/votes", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto segment = field<std::string>(body, "segment_id");
      const auto worker = field<std::string>(body, "worker_id");
      const Opinion opinion = parse_opinion(field<std::string>(body, "opinion"));
      const VoteAck ack = engine.submit_vote(segment, worker, opinion, clock());
      send_json(res, 200,
                {{"vote_id", ack.vote_id},
                 {"provisional", ack.provisional ? json(to_string(*ack.provisional)) : json(nullptr)},
                 {"segment_verdict", to_string(ack.segment_verdict)}});
    }));

    server.Get(R"(/videos/([^/]+)/decision)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, decision_to_json(engine.query_decision(req.matches[1])));
    }));

    server.Get("/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
      const EngineState state = engine.snapshot();
      const auto events = engine.events();
      const MetricsReport m = compute_metrics(state, events, engine.config().judgment);
      json j = summarize(state);
      j["latency_s"] = {{"mean", m.latency_mean_s ? json(*m.latency_mean_s) : json(nullptr)},
                        {"p95", m.latency_p95_s ? json(*m.latency_p95_s) : json(nullptr)}};
      send_json(res, 200, j);
    }));
  }

  void ticker() {
    std::unique_lock lock(mu);
    while (!stopping) {
      cv.wait_for(lock, std::chrono::milliseconds(200));
      if (stopping) break;
      try {
        engine.tick(clock());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ClockRegression) throw;
      }
    }
  }
};

Service::Service(Engine& engine, Clock clock) : impl_(std::make_unique<Impl>(engine, std::move(clock))) {}

Service::~Service() { stop(); }

bool Service::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
    return impl_->port > 0;
  }
  if (!impl_->server.bind_to_port(host, port)) return false;
  impl_->port = port;
  return true;
}

int Service::port() const { return impl_->port; }

void Service::run() {
  std::thread tick_thread([this] { impl_->ticker(); });
  impl_->server.listen_after_bind();
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  tick_thread.join();
}

void Service::stop() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace crowdmod
