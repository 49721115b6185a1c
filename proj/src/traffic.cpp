#include "coglo/traffic.h"

#include <algorithm>
#include <numeric>
#include <set>

namespace coglo {

namespace {

EventSource source_from_string(std::string_view s) {
  if (s == "automatic") return EventSource::automatic;
  if (s == "external") return EventSource::external;
  if (s == "manual") return EventSource::manual;
  throw Error(ErrorCode::validation, "unknown event source '" + std::string(s) + "'",
              std::string(s));
}

const nlohmann::json& field(const nlohmann::json& doc, const char* key,
                            const std::string& id) {
  if (!doc.contains(key) || doc.at(key).is_null()) {
    throw Error(ErrorCode::validation,
                "event '" + id + "': missing mandatory field '" + key + "'", key);
  }
  return doc.at(key);
}

double number(const nlohmann::json& doc, const char* key, const std::string& id) {
  const auto& v = field(doc, key, id);
  if (!v.is_number()) {
    throw Error(ErrorCode::validation,
                "event '" + id + "': field '" + key + "' must be numeric", key);
  }
  return v.get<double>();
}

TrafficEvent parse_event(const nlohmann::json& doc, EventSource default_source,
                         std::vector<std::string>& warnings) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::validation, "event document must be an object");
  }
  TrafficEvent ev;
  if (!doc.contains("id") || !doc.at("id").is_string()) {
    throw Error(ErrorCode::validation, "event: missing mandatory field 'id'", "id");
  }
  ev.id = doc.at("id").get<std::string>();

  const std::string kind = field(doc, "kind", ev.id).get<std::string>();
  if (auto k = event_kind_from_string(kind)) {
    ev.kind = *k;
  } else {
    ev.kind = EventKind::congestion;
    warnings.push_back("unknown kind '" + kind + "' mapped to congestion");
  }

  const auto& scope = field(doc, "scope", ev.id);
  if (scope.contains("edges")) {
    ev.scope = scope.at("edges").get<std::vector<std::string>>();
  } else if (scope.contains("center")) {
    RadiusScope r;
    r.lat = number(scope.at("center"), "lat", ev.id);
    r.lon = number(scope.at("center"), "lon", ev.id);
    r.radius_m = number(scope, "radius_m", ev.id);
    ev.scope = r;
  } else {
    throw Error(ErrorCode::validation,
                "event '" + ev.id + "': scope needs 'edges' or 'center'", "scope");
  }

  ev.severity = number(doc, "severity", ev.id);

  const auto& effect = field(doc, "effect", ev.id);
  if (effect.contains("closed") && effect.at("closed").get<bool>()) {
    ev.effect = Closed{};
  } else if (effect.contains("speed_multiplier")) {
    ev.effect = SpeedMultiplier{number(effect, "speed_multiplier", ev.id)};
  } else if (effect.contains("speed_cap_kmh")) {
    ev.effect = SpeedCap{number(effect, "speed_cap_kmh", ev.id)};
  } else {
    throw Error(ErrorCode::validation,
                "event '" + ev.id + "': effect needs speed_multiplier, speed_cap_kmh or closed",
                "effect");
  }

  ev.valid_from = number(doc, "valid_from", ev.id);
  ev.valid_to = number(doc, "valid_to", ev.id);
  ev.source = doc.contains("source") ? source_from_string(doc.at("source").get<std::string>())
                                     : default_source;
  validate_event(ev);
  return ev;
}

}  // namespace

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::accident: return "accident";
    case EventKind::congestion: return "congestion";
    case EventKind::closure: return "closure";
    case EventKind::weather: return "weather";
    case EventKind::speed_limit: return "speed_limit";
  }
  return "congestion";
}

const char* to_string(EventSource source) {
  switch (source) {
    case EventSource::automatic: return "automatic";
    case EventSource::external: return "external";
    case EventSource::manual: return "manual";
  }
  return "manual";
}

std::optional<EventKind> event_kind_from_string(std::string_view s) {
  if (s == "accident") return EventKind::accident;
  if (s == "congestion") return EventKind::congestion;
  if (s == "closure") return EventKind::closure;
  if (s == "weather") return EventKind::weather;
  if (s == "speed_limit") return EventKind::speed_limit;
  return std::nullopt;
}

const char* to_string(LoS band) {
  static const char* names[] = {"A", "B", "C", "D", "E", "F"};
  return names[static_cast<int>(band)];
}

void validate_event(const TrafficEvent& ev) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::validation, "event '" + ev.id + "': " + what, ev.id);
  };
  if (ev.id.empty()) fail("empty id");
  if (!(ev.valid_from < ev.valid_to)) fail("valid_from must precede valid_to");
  if (ev.severity < 0.0 || ev.severity > 1.0) fail("severity outside [0,1]");
  if (const auto* edges = std::get_if<std::vector<std::string>>(&ev.scope)) {
    if (edges->empty()) fail("empty scope");
  } else {
    const auto& r = std::get<RadiusScope>(ev.scope);
    if (r.radius_m < 0.0) fail("negative radius");
  }
  if (const auto* m = std::get_if<SpeedMultiplier>(&ev.effect)) {
    if (!(m->value > 0.0 && m->value <= 1.0)) fail("speed_multiplier outside (0,1]");
  } else if (const auto* c = std::get_if<SpeedCap>(&ev.effect)) {
    if (!(c->kmh > 0.0)) fail("speed_cap_kmh must be positive");
  }
}

nlohmann::json event_to_json(const TrafficEvent& ev) {
  nlohmann::json scope;
  if (const auto* edges = std::get_if<std::vector<std::string>>(&ev.scope)) {
    scope = {{"edges", *edges}};
  } else {
    const auto& r = std::get<RadiusScope>(ev.scope);
    scope = {{"center", {{"lat", r.lat}, {"lon", r.lon}}}, {"radius_m", r.radius_m}};
  }
  nlohmann::json effect;
  if (const auto* m = std::get_if<SpeedMultiplier>(&ev.effect)) {
    effect = {{"speed_multiplier", m->value}};
  } else if (const auto* c = std::get_if<SpeedCap>(&ev.effect)) {
    effect = {{"speed_cap_kmh", c->kmh}};
  } else {
    effect = {{"closed", true}};
  }
  return {{"id", ev.id},
          {"kind", to_string(ev.kind)},
          {"scope", scope},
          {"severity", ev.severity},
          {"effect", effect},
          {"valid_from", ev.valid_from},
          {"valid_to", ev.valid_to},
          {"source", to_string(ev.source)}};
}

IngestResult ingest_external_event(const nlohmann::json& document) {
  IngestResult result;
  result.event = parse_event(document, EventSource::external, result.warnings);
  result.event.source = EventSource::external;
  return result;
}

TrafficEvent event_from_json(const nlohmann::json& document) {
  std::vector<std::string> ignored;
  return parse_event(document, EventSource::manual, ignored);
}

std::vector<std::string> resolve_scope(const RoadGraph& graph, const TrafficEvent& ev) {
  if (const auto* edges = std::get_if<std::vector<std::string>>(&ev.scope)) {
    std::set<std::string> unique;
    for (const auto& id : *edges) {
      if (!graph.find_edge(id)) {
        throw Error(ErrorCode::validation,
                    "event '" + ev.id + "': scope edge '" + id + "' not in graph", id);
      }
      unique.insert(id);
    }
    return {unique.begin(), unique.end()};
  }
  const auto& r = std::get<RadiusScope>(ev.scope);
  std::vector<bool> inside(graph.nodes().size());
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const Node& n = graph.nodes()[i];
    inside[i] = haversine_m(r.lat, r.lon, n.lat, n.lon) <= r.radius_m;
  }
  std::vector<std::string> out;
  for (std::size_t e = 0; e < graph.edges().size(); ++e) {
    if (inside[graph.edge_tail(e)] || inside[graph.edge_head(e)]) {
      out.push_back(graph.edges()[e].id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<double> effective_speed(const Edge& edge,
                                      std::span<const TrafficEvent* const> events) {
  double speed = edge.free_flow_speed_kmh;
  for (const TrafficEvent* ev : events) {
    if (std::holds_alternative<Closed>(ev->effect)) return std::nullopt;
    if (const auto* m = std::get_if<SpeedMultiplier>(&ev->effect)) {
      speed = std::min(speed, edge.free_flow_speed_kmh * m->value);
    } else if (const auto* c = std::get_if<SpeedCap>(&ev->effect)) {
      speed = std::min(speed, c->kmh);
    }
  }
  return speed;
}

LoS classify_los(std::optional<double> effective, double free_flow) {
  if (!effective) return LoS::F;
  const double r = free_flow / *effective;
  if (r <= 1.1) return LoS::A;
  if (r <= 1.25) return LoS::B;
  if (r <= 1.5) return LoS::C;
  if (r <= 2.0) return LoS::D;
  if (r <= 3.0) return LoS::E;
  return LoS::F;
}

EventContext::EventContext(const RoadGraph& graph, std::vector<TrafficEvent> events)
    : events_(std::move(events)), by_edge_(graph.edges().size()) {
  scopes_.reserve(events_.size());
  for (std::size_t i = 0; i < events_.size(); ++i) {
    scopes_.push_back(resolve_scope(graph, events_[i]));
    for (const auto& id : scopes_.back()) by_edge_[graph.edge_index(id)].push_back(i);
  }
}

std::optional<double> EventContext::effective_speed_kmh(std::size_t edge_index,
                                                        const Edge& edge,
                                                        Seconds t) const {
  std::vector<const TrafficEvent*> active;
  for (std::size_t i : by_edge_[edge_index]) {
    if (events_[i].active_at(t)) active.push_back(&events_[i]);
  }
  return effective_speed(edge, active);
}

std::vector<std::string> EventContext::active_event_ids(Seconds t) const {
  std::vector<std::string> ids;
  for (const auto& ev : events_) {
    if (ev.active_at(t)) ids.push_back(ev.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::optional<TrafficEvent> detect_events(const MeasurementWindow& window,
                                          const RoadGraph& graph,
                                          const DetectionConfig& config) {
  const Edge& edge = graph.edge(window.edge_id);
  const auto& s = window.samples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!(s[i].first > s[i - 1].first)) {
      throw Error(ErrorCode::validation,
                  "measurement timestamps must be strictly increasing", window.edge_id);
    }
  }
  if (s.empty() || s.back().first - s.front().first < config.window_s) {
    throw Error(ErrorCode::validation, "measurement window shorter than detection window",
                window.edge_id);
  }
  const Seconds end = s.back().first;
  const double limit = config.threshold * edge.free_flow_speed_kmh;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [t, speed] : s) {
    if (t < end - config.window_s) continue;
    if (!(speed < limit)) return std::nullopt;
    sum += speed;
    ++count;
  }
  const double ratio = (sum / static_cast<double>(count)) / edge.free_flow_speed_kmh;
  TrafficEvent ev;
  ev.id = "auto-" + window.edge_id + "-" + std::to_string(static_cast<long long>(end));
  ev.kind = EventKind::congestion;
  ev.scope = std::vector<std::string>{window.edge_id};
  ev.severity = 1.0 - ratio;
  ev.effect = SpeedMultiplier{ratio};
  ev.valid_from = end;
  ev.valid_to = end + config.window_s;
  ev.source = EventSource::automatic;
  return ev;
}

std::vector<ResponseAdvisory> response_plan(const RoadGraph& graph,
                                            const TrafficEvent& event,
                                            std::span<const PlannedRoute> routes,
                                            const SpeedSource& ctx, Seconds t) {
  const auto scope = resolve_scope(graph, event);
  const std::set<std::string> touched(scope.begin(), scope.end());
  TravelModel model(graph, ctx, t);
  std::vector<ResponseAdvisory> out;
  for (const auto& route : routes) {
    for (const auto& leg : route.legs) {
      if (!leg.path) continue;
      const bool hit = std::any_of(leg.path->edge_ids.begin(), leg.path->edge_ids.end(),
                                   [&](const std::string& e) { return touched.count(e) > 0; });
      if (!hit) continue;
      ResponseAdvisory adv;
      adv.vehicle = route.vehicle;
      adv.affected_stops = {leg.stop_index};
      adv.detour = model.path(leg.from, leg.to);
      adv.delay_delta_s = adv.detour ? adv.detour->total_time_s - leg.path->total_time_s
                                     : kUnreachable;
      out.push_back(std::move(adv));
    }
  }
  return out;
}

EffectSize estimate_effect_size(const RoadGraph& graph, const TrafficEvent& event,
                                std::span<const PlannedRoute> routes) {
  const auto scope = resolve_scope(graph, event);
  const std::set<std::string> touched(scope.begin(), scope.end());
  EffectSize size;
  size.edges = scope.size();
  for (const auto& route : routes) {
    const bool hit = std::any_of(route.legs.begin(), route.legs.end(), [&](const PlannedLeg& leg) {
      return leg.path && std::any_of(leg.path->edge_ids.begin(), leg.path->edge_ids.end(),
                                     [&](const std::string& e) { return touched.count(e) > 0; });
    });
    if (hit) ++size.routes;
  }
  return size;
}

RttiSnapshot publish_rtti(const RoadGraph& graph, const EventContext& ctx,
                          std::span<const MonitoredRoute> monitored, Seconds t) {
  RttiSnapshot snap;
  snap.timestamp = t;
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const Edge& e = graph.edges()[i];
    EdgeStatus st;
    st.effective_speed_kmh = ctx.effective_speed_kmh(i, e, t);
    st.los = classify_los(st.effective_speed_kmh, e.free_flow_speed_kmh);
    snap.per_edge.emplace(e.id, st);
  }
  for (const auto& route : monitored) {
    if (!graph.find_node(route.from) || !graph.find_node(route.to)) {
      throw Error(ErrorCode::validation,
                  "monitored route '" + route.id + "' has an unknown endpoint", route.id);
    }
    const auto path = shortest_path(graph, route.from, route.to, t, ctx);
    snap.monitored_routes[route.id] = path ? path->total_time_s : kUnreachable;
  }
  snap.active_events = ctx.active_event_ids(t);
  return snap;
}

nlohmann::json rtti_to_json(const RttiSnapshot& snap) {
  nlohmann::json edges = nlohmann::json::object();
  for (const auto& [id, st] : snap.per_edge) {
    edges[id] = {{"effective_speed_kmh",
                  st.effective_speed_kmh ? nlohmann::json(*st.effective_speed_kmh)
                                         : nlohmann::json(nullptr)},
                 {"los", to_string(st.los)}};
  }
  nlohmann::json routes = nlohmann::json::object();
  for (const auto& [id, time] : snap.monitored_routes) {
    routes[id] = is_unreachable(time) ? nlohmann::json(nullptr) : nlohmann::json(time);
  }
  return {{"timestamp", snap.timestamp},
          {"per_edge", edges},
          {"monitored_routes", routes},
          {"active_events", snap.active_events}};
}

}  // namespace coglo
