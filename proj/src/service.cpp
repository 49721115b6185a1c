#include "coglo/service.h"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

namespace coglo {

using json = nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::expired: return 410;
    case ErrorCode::size_guard: return 422;
    case ErrorCode::internal: return 500;
  }
  return 500;
}

json error_to_json(const Error& error) {
  return {{"code", to_string(error.code())}, {"message", error.what()}, {"detail", error.detail()}};
}

KpiReport plan_kpis(const WorldState& state, const ObjectiveWeights& weights,
                    const std::vector<Recommendation>& recommendations) {
  SimTrace trace;
  EventContext ctx(*state.graph, state.events);
  TravelModel travel(*state.graph, ctx, state.clock);
  for (const auto& r : state.plan.routes) {
    const auto loads = running_loads(r, state.orders);
    for (std::size_t i = 0; i + 1 < r.stops.size(); ++i) {
      const double km = travel.leg(r.stops[i].node, r.stops[i + 1].node).distance_m / 1000.0;
      if (!std::isfinite(km)) continue;
      trace.push_back({0.0, 0, "depart", {{"vehicle", r.vehicle}, {"km", km}, {"load", loads[i]}}});
    }
    for (const auto& s : r.stops) {
      if (s.voided || s.action != StopAction::delivery || !s.eta) continue;
      json parcels = json::array();
      for (const auto& id : s.orders) {
        const double late = std::max(0.0, *s.eta - state.orders.at(id).due()) / 60.0;
        parcels.push_back({{"order", id}, {"on_time", late <= 0.0}, {"late_min", late}});
      }
      trace.push_back({0.0, 0, "delivery_attempt", {{"parcels", parcels}}});
    }
  }
  for (const auto& rec : recommendations) {
    if (rec.ephemeral) continue;
    if (!rec.trigger) trace.push_back({0.0, 0, "reopt_tick", json::object()});
    trace.push_back({0.0, 0, "recommendation_emitted", json::object()});
    if (rec.status != RecStatus::proposed) {
      trace.push_back({0.0, 0, "recommendation_decided", {{"status", to_string(rec.status)}}});
    }
  }
  for (const auto& [id, o] : state.orders) {
    if (o.state == OrderState::failed) {
      trace.push_back({0.0, 0, "order_closed", {{"order", id}, {"outcome", "failed"}}});
    }
  }
  for (const auto& id : state.plan.unassigned) {
    trace.push_back({0.0, 0, "order_closed", {{"order", id}, {"outcome", "unassigned"}}});
  }
  return kpis(trace, state.fleet, weights);
}

namespace {

constexpr int kMaxPollMs = 30000;

struct Session {
  std::mutex m;
  std::condition_variable cv;
  Scenario scenario;
  std::unique_ptr<Advisor> advisor;
  std::vector<json> stream;
  std::uint64_t published_version = 0;

  void publish(const std::string& type, json payload) {
    stream.push_back({{"seq", stream.size() + 1}, {"type", type}, {"payload", std::move(payload)}});
    cv.notify_all();
  }
  void publish_version() {
    const auto& s = advisor->state();
    if (s.version == published_version) return;
    published_version = s.version;
    publish("plan-version", {{"version", s.version}, {"objective", s.plan.objective}});
  }
};

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("malformed JSON body: ") + ex.what());
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  std::shared_mutex sessions_m;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_id = 0;
  httplib::Server server;
  std::thread thread;

  Impl() { routes(); }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(sessions_m);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::not_found, "unknown scenario '" + id + "'", id);
    return it->second;
  }

  std::string load(const json& doc) {
    auto session = std::make_shared<Session>();
    session->scenario = scenario_from_json(doc);
    const Scenario& sc = session->scenario;
    WorldState world;
    world.graph = sc.graph;
    world.fleet = sc.fleet;
    world.monitored = sc.monitored;
    world.clock = sc.day_start;
    for (const auto& e : sc.events) {
      if (e.valid_from <= sc.day_start && e.valid_to > sc.day_start) world.events.push_back(e);
    }
    for (const auto& o : sc.orders) {
      if (o.announce_time <= sc.day_start) world.orders[o.id] = o;
    }
    AdvisorConfig config = sc.knobs;
    config.seed = sc.seed;
    session->advisor = std::make_unique<Advisor>(std::move(world), config);
    session->advisor->daily_orchestration();
    session->publish_version();
    std::unique_lock lock(sessions_m);
    const std::string id = "s" + std::to_string(++next_id);
    sessions[id] = std::move(session);
    return id;
  }

  // Runs `body` with the session locked and maps errors onto responses.
  template <class F>
  void with_session(const httplib::Request& req, httplib::Response& res, F body) {
    guarded(res, [&] {
      auto session = find(req.matches[1]);
      std::unique_lock lock(session->m);
      body(*session, lock);
    });
  }

  template <class F>
  void guarded(httplib::Response& res, F body) {
    try {
      body();
    } catch (const Error& e) {
      reply(res, http_status(e.code()), error_to_json(e));
    } catch (const json::exception& e) {
      reply(res, 400, error_to_json(Error(ErrorCode::validation, e.what())));
    } catch (const std::exception& e) {
      reply(res, 500, error_to_json(Error(ErrorCode::internal, e.what())));
    }
  }

  void routes() {
    server.Post("/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = load(parse_body(req));
        auto session = find(id);
        std::unique_lock lock(session->m);
        const auto& s = session->advisor->state();
        reply(res, 201, {{"id", id}, {"version", s.version}, {"objective", s.plan.objective}});
      });
    });

    server.Get(R"(/scenarios/([^/]+)/state)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, auto&) {
                   reply(res, 200, state_to_json(s.advisor->state()));
                 });
               });

    server.Post(R"(/scenarios/([^/]+)/events)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  with_session(req, res, [&](Session& s, auto&) {
                    const AdhocEvent event = adhoc_from_json(parse_body(req));
                    const Recommendation rec = s.advisor->handle_event(event);
                    json ev = adhoc_to_json(*rec.trigger);
                    ev["sequence"] = rec.trigger->sequence;
                    s.publish("event", ev);
                    s.publish("recommendation", recommendation_to_json(rec));
                    s.publish_version();
                    json body = recommendation_to_json(rec);
                    body["event_sequence"] = rec.trigger->sequence;
                    body["stream_seq"] = s.stream.size();
                    reply(res, 201, body);
                  });
                });

    server.Get(R"(/scenarios/([^/]+)/recommendations)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, auto&) {
                   std::optional<RecStatus> filter;
                   if (req.has_param("status")) {
                     filter = rec_status_from_string(req.get_param_value("status"));
                   }
                   json out = json::array();
                   for (const auto& rec : s.advisor->recommendations()) {
                     if (!filter || rec.status == *filter) out.push_back(recommendation_to_json(rec));
                   }
                   reply(res, 200, out);
                 });
               });

    server.Post(R"(/scenarios/([^/]+)/recommendations/([^/]+)/decision)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  with_session(req, res, [&](Session& s, auto&) {
                    const json body = parse_body(req);
                    if (!body.contains("verdict") || !body.at("verdict").is_string()) {
                      throw Error(ErrorCode::validation, "body needs a string 'verdict'");
                    }
                    const Verdict verdict = verdict_from_string(body.at("verdict").get<std::string>());
                    const std::string rid = req.matches[2];
                    try {
                      const Recommendation& rec = s.advisor->decide(rid, verdict);
                      s.publish("recommendation", recommendation_to_json(rec));
                      s.publish_version();
                      json out = recommendation_to_json(rec);
                      out["version"] = s.advisor->state().version;
                      reply(res, 200, out);
                    } catch (const Error& e) {
                      if (e.code() == ErrorCode::expired) {
                        s.publish("recommendation",
                                  recommendation_to_json(s.advisor->recommendation(rid)));
                      }
                      throw;
                    }
                  });
                });

    server.Post(R"(/scenarios/([^/]+)/dry-run)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  with_session(req, res, [&](Session& s, auto&) {
                    const AdhocEvent event = adhoc_from_json(parse_body(req));
                    reply(res, 200, recommendation_to_json(s.advisor->dry_run(event)));
                  });
                });

    server.Get(R"(/scenarios/([^/]+)/plan)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, auto&) {
                   const std::string format =
                       req.has_param("format") ? req.get_param_value("format") : "json";
                   const auto& state = s.advisor->state();
                   if (format == "json") {
                     json out = plan_to_json(state.plan);
                     out["version"] = state.version;
                     reply(res, 200, out);
                   } else if (format == "geojson") {
                     EventContext ctx(*state.graph, state.events);
                     TravelModel travel(*state.graph, ctx, state.clock);
                     res.status = 200;
                     res.set_content(plan_to_geojson(state.plan, travel, state.orders).dump(),
                                     "application/geo+json");
                   } else {
                     throw Error(ErrorCode::validation, "format must be json or geojson", format);
                   }
                 });
               });

    server.Get(R"(/scenarios/([^/]+)/rtti)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, auto&) {
                   reply(res, 200, rtti_to_json(s.advisor->rtti()));
                 });
               });

    server.Get(R"(/scenarios/([^/]+)/kpis)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, auto&) {
                   const auto& a = *s.advisor;
                   json out = kpis_to_json(plan_kpis(a.state(), a.config().weights, a.recommendations()));
                   out["version"] = a.state().version;
                   reply(res, 200, out);
                 });
               });

    server.Get(R"(/scenarios/([^/]+)/stream)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s, std::unique_lock<std::mutex>& lock) {
                   std::size_t after = 0;
                   int timeout_ms = 10000;
                   try {
                     if (req.has_param("after")) after = std::stoul(req.get_param_value("after"));
                     if (req.has_param("timeout_ms")) {
                       timeout_ms = std::stoi(req.get_param_value("timeout_ms"));
                     }
                   } catch (const std::exception&) {
                     throw Error(ErrorCode::validation, "after and timeout_ms must be integers");
                   }
                   timeout_ms = std::clamp(timeout_ms, 0, kMaxPollMs);
                   s.cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                                 [&] { return s.stream.size() > after; });
                   json out = json::array();
                   for (std::size_t i = after; i < s.stream.size(); ++i) out.push_back(s.stream[i]);
                   reply(res, 200, {{"messages", out}, {"last", s.stream.size()}});
                 });
               });
  }
};

Service::Service() : impl_(std::make_unique<Impl>()) {}

Service::~Service() { stop(); }

std::string Service::load(const json& scenario) { return impl_->load(scenario); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace coglo
