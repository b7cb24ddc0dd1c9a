// HTTP front end for service mode (worker-pull task API).

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "crowdmod/engine.hpp"
#include "json.hpp"

namespace crowdmod {

nlohmann::json decision_to_json(const Decision& d);
nlohmann::json offer_to_json(const TaskOffer& offer, Timestamp now);

/// Maps engine error codes to HTTP status codes.
int http_status_for(ErrorCode code);

/// Endpoints:
///   POST /videos {id, duration_s, locale}
///   POST /workers {id, identity_class, locale}
///   GET  /workers/{id}/tasks   -> next open assignment, or 204
///   POST /votes {segment_id, worker_id, opinion}
///   GET  /videos/{id}/decision
///   GET  /metrics
class Service {
 public:
  using Clock = std::function<Timestamp()>;

  Service(Engine& engine, Clock clock);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Returns false when the port cannot be bound. Port 0 picks a free port.
  bool bind(const std::string& host, int port);
  int port() const;
  /// Serves until stop(); also ticks the engine periodically.
  void run();
  void stop();
  void wait_until_ready() const;

  static Timestamp wall_clock();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace crowdmod
