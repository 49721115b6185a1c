#pragma once

// Vehicles, orders, stops, routes and plans; validation, ETAs and the order
// lifecycle.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coglo/network.h"

namespace coglo {

enum class VehicleStatus { available, en_route, broken };

struct Vehicle {
  std::string id;
  int capacity_units = 1;
  std::string home_depot;
  Seconds shift_start = 0.0;
  Seconds shift_end = 0.0;
  double cost_per_km = 0.0;
  double fixed_cost = 0.0;
  double fuel_base_l_per_km = 0.0;
  double fuel_load_coeff_l_per_km = 0.0;
  VehicleStatus status = VehicleStatus::available;
  // Runs a route no optimizer may touch (e.g. the line-haul between offices
  // of exchange).
  bool fixed_route = false;

  bool operator==(const Vehicle&) const = default;
};

enum class OrderState {
  announced,
  assigned,
  picked_up,
  at_exchange,
  in_transit,
  delivered,
  failed,
};

struct TimeWindow {
  Seconds earliest = 0.0;
  Seconds latest = 0.0;
  bool operator==(const TimeWindow&) const = default;
};

struct Order {
  std::string id;
  int size_units = 1;
  std::string pickup;
  std::string delivery;
  Seconds announce_time = 0.0;
  std::optional<TimeWindow> tw_delivery;
  Seconds sla_deadline = 0.0;
  int priority = 0;
  OrderState state = OrderState::announced;
  // Earliest time the parcel is available at its pickup node.
  std::optional<Seconds> ready_time;

  /// Deadline used for lateness: the SLA, tightened by the time window.
  Seconds due() const;
  bool operator==(const Order&) const = default;
};

using Fleet = std::map<std::string, Vehicle>;
using OrderBook = std::map<std::string, Order>;

enum class StopAction { depot_start, pickup, delivery, exchange_handover, depot_end };

struct Stop {
  std::string node;
  StopAction action = StopAction::depot_start;
  std::vector<std::string> orders;
  std::optional<Seconds> eta;
  Seconds service_time_s = 0.0;
  Seconds slack_s = 0.0;
  // Kept for history but no longer moves its parcels (missed delivery
  // attempt, or a pickup whose parcels were handed to another vehicle).
  bool voided = false;

  bool is_order_stop() const {
    return action != StopAction::depot_start && action != StopAction::depot_end;
  }
  bool unloads() const {
    return action == StopAction::delivery || action == StopAction::exchange_handover;
  }
  bool operator==(const Stop&) const = default;
};

struct Route {
  std::string vehicle;
  std::vector<Stop> stops;

  bool operator==(const Route&) const = default;
};

struct Plan {
  std::vector<Route> routes;
  std::vector<std::string> unassigned;
  double objective = 0.0;

  const Route* route_of(std::string_view vehicle) const;
  Route* route_of(std::string_view vehicle);
  bool operator==(const Plan&) const = default;
};

/// depot_start/depot_end pair at the vehicle's home depot.
Route empty_route(const Vehicle& vehicle);

inline constexpr double kDefaultServiceTimeS = 120.0;

enum class ViolationKind {
  capacity,
  precedence,
  shift,
  unknown_node,
  duplicate_order,
  structural,
};
const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string vehicle;
  std::optional<std::size_t> stop_index;
  std::string order;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  double lateness_total_min = 0.0;

  bool feasible() const { return violations.empty(); }
};

/// Hard violations (capacity, precedence, shift, structure) plus the soft
/// lateness total. Pure.
ValidationReport validate_plan(const Plan& plan, const RoadGraph& graph,
                               const Fleet& fleet, const OrderBook& orders);

/// Running load after each stop. Voided stops move nothing.
std::vector<int> running_loads(const Route& route, const OrderBook& orders);

/// ETAs under one travel snapshot:
///   eta(stop_0) = max(t0, shift.start)
///   eta(stop_i) = eta(stop_{i-1}) + service + slack + travel
/// Pickups additionally wait for the order's ready time. The first
/// `frozen` stops keep their ETAs; the next departure is then no earlier
/// than t0. Unreachable legs propagate kUnreachable downstream.
void compute_etas(Route& route, const Vehicle& vehicle, TravelModel& travel, Seconds t0,
                  const OrderBook* orders = nullptr, std::size_t frozen = 0);

bool is_legal_transition(OrderState from, OrderState to);

/// Returns the order in `target` state; Error{conflict} naming both states
/// when the lifecycle forbids the step.
Order transition(Order order, OrderState target);

const char* to_string(OrderState state);
OrderState order_state_from_string(std::string_view s);
const char* to_string(StopAction action);
StopAction stop_action_from_string(std::string_view s);
const char* to_string(VehicleStatus status);

nlohmann::json vehicle_to_json(const Vehicle& v);
Vehicle vehicle_from_json(const nlohmann::json& j);
nlohmann::json order_to_json(const Order& o);
Order order_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const Plan& plan);
Plan plan_from_json(const nlohmann::json& j);
nlohmann::json route_to_json(const Route& route);
nlohmann::json report_to_json(const ValidationReport& report);

/// One LineString per route leg, properties {vehicle, load, eta}.
nlohmann::json plan_to_geojson(const Plan& plan, TravelModel& travel,
                               const OrderBook& orders);

}  // namespace coglo
