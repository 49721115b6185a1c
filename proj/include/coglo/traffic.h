#pragma once

// Traffic events, effective speeds, Level-of-Service, automatic detection,
// external event ingestion, response plans and RTTI publication.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coglo/network.h"

namespace coglo {

enum class EventKind { accident, congestion, closure, weather, speed_limit };
enum class EventSource { automatic, external, manual };

const char* to_string(EventKind kind);
const char* to_string(EventSource source);
std::optional<EventKind> event_kind_from_string(std::string_view s);

struct RadiusScope {
  double lat = 0.0;
  double lon = 0.0;
  double radius_m = 0.0;

  bool operator==(const RadiusScope&) const = default;
};

/// Either an explicit edge-id list or a circle around a point.
using EventScope = std::variant<std::vector<std::string>, RadiusScope>;

struct SpeedMultiplier {
  double value = 1.0;  // (0, 1]
  bool operator==(const SpeedMultiplier&) const = default;
};
struct SpeedCap {
  double kmh = 0.0;
  bool operator==(const SpeedCap&) const = default;
};
struct Closed {
  bool operator==(const Closed&) const = default;
};
using EventEffect = std::variant<SpeedMultiplier, SpeedCap, Closed>;

struct TrafficEvent {
  std::string id;
  EventKind kind = EventKind::congestion;
  EventScope scope = std::vector<std::string>{};
  double severity = 0.0;
  EventEffect effect = SpeedMultiplier{};
  Seconds valid_from = 0.0;
  Seconds valid_to = 0.0;
  EventSource source = EventSource::manual;

  bool active_at(Seconds t) const { return valid_from <= t && t < valid_to; }
  bool operator==(const TrafficEvent&) const = default;
};

/// Throws Error{validation} when the event breaks its own invariants.
void validate_event(const TrafficEvent& event);

nlohmann::json event_to_json(const TrafficEvent& event);

/// Parses the external-event schema. `source` defaults to external when the
/// document does not carry one.
struct IngestResult {
  TrafficEvent event;
  std::vector<std::string> warnings;
};
IngestResult ingest_external_event(const nlohmann::json& document);

/// Parses an event document keeping its declared source (manual when absent).
TrafficEvent event_from_json(const nlohmann::json& document);

/// Edge ids covered by the event, sorted. Radius scopes take every edge with
/// at least one endpoint within radius_m of the center.
std::vector<std::string> resolve_scope(const RoadGraph& graph, const TrafficEvent& event);

/// `events` must already be filtered to those active at t and covering the
/// edge. nullopt = impassable.
std::optional<double> effective_speed(const Edge& edge,
                                      std::span<const TrafficEvent* const> events);

enum class LoS { A, B, C, D, E, F };
const char* to_string(LoS band);

/// Band from the free-flow/effective ratio; impassable is F.
LoS classify_los(std::optional<double> effective_speed_kmh, double free_flow_speed_kmh);

/// Registered events with their resolved scopes; the SpeedSource used for
/// every traffic-aware travel query.
class EventContext final : public SpeedSource {
 public:
  EventContext(const RoadGraph& graph, std::vector<TrafficEvent> events);

  std::optional<double> effective_speed_kmh(std::size_t edge_index, const Edge& edge,
                                            Seconds t) const override;

  const std::vector<TrafficEvent>& events() const { return events_; }
  std::vector<std::string> active_event_ids(Seconds t) const;
  const std::vector<std::string>& scope_of(std::size_t event_index) const {
    return scopes_[event_index];
  }

 private:
  std::vector<TrafficEvent> events_;
  std::vector<std::vector<std::string>> scopes_;
  std::vector<std::vector<std::size_t>> by_edge_;
};

struct MeasurementWindow {
  std::string edge_id;
  std::vector<std::pair<Seconds, double>> samples;  // (timestamp, km/h)
};

struct DetectionConfig {
  double window_s = 300.0;
  double threshold = 0.5;  // fraction of free flow
};

/// Emits an automatic congestion event when every sample in the trailing
/// window lies below threshold × free flow.
std::optional<TrafficEvent> detect_events(const MeasurementWindow& window,
                                          const RoadGraph& graph,
                                          const DetectionConfig& config = {});

/// One leg of a planned vehicle route, as travelled under the old context.
struct PlannedLeg {
  std::size_t stop_index = 0;  // index of the leg's destination stop
  std::string from;
  std::string to;
  std::optional<Path> path;
};

struct PlannedRoute {
  std::string vehicle;
  std::vector<PlannedLeg> legs;
};

struct ResponseAdvisory {
  std::string vehicle;
  std::vector<std::size_t> affected_stops;
  std::optional<Path> detour;  // nullopt: leg disconnected
  double delay_delta_s = 0.0;  // kUnreachable when disconnected
};

/// Advisories for every planned leg whose path touches the event's scope.
/// Detours are computed under `ctx` (which must already include the event).
std::vector<ResponseAdvisory> response_plan(const RoadGraph& graph,
                                            const TrafficEvent& event,
                                            std::span<const PlannedRoute> routes,
                                            const SpeedSource& ctx, Seconds t);

/// Size of the infrastructure touched by an event: affected edges plus the
/// planned routes traversing them.
struct EffectSize {
  std::size_t edges = 0;
  std::size_t routes = 0;
};
EffectSize estimate_effect_size(const RoadGraph& graph, const TrafficEvent& event,
                                std::span<const PlannedRoute> routes);

struct MonitoredRoute {
  std::string id;
  std::string from;
  std::string to;
};

struct EdgeStatus {
  std::optional<double> effective_speed_kmh;
  LoS los = LoS::A;
};

struct RttiSnapshot {
  Seconds timestamp = 0.0;
  std::map<std::string, EdgeStatus> per_edge;
  std::map<std::string, double> monitored_routes;  // kUnreachable when cut off
  std::vector<std::string> active_events;
};

RttiSnapshot publish_rtti(const RoadGraph& graph, const EventContext& ctx,
                          std::span<const MonitoredRoute> monitored, Seconds t);

nlohmann::json rtti_to_json(const RttiSnapshot& snapshot);

}  // namespace coglo
