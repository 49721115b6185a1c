#pragma once

// HTTP/JSON front end: one advisor session per loaded scenario.

#include <memory>
#include <string>

#include "coglo/simulator.h"

namespace coglo {

/// HTTP status for an error code.
int http_status(ErrorCode code);

/// {code, message, detail}
nlohmann::json error_to_json(const Error& error);

/// Planned KPIs of a plan as if it were driven exactly on its ETAs.
KpiReport plan_kpis(const WorldState& state, const ObjectiveWeights& weights,
                    const std::vector<Recommendation>& recommendations);

class Service {
 public:
  Service();
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Builds a session from a scenario document and runs the daily plan.
  /// Returns the session id.
  std::string load(const nlohmann::json& scenario);

  /// Serves on a background thread; port 0 picks a free one. Returns the
  /// bound port, or -1.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coglo
