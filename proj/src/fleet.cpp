#include "coglo/fleet.h"

#include <algorithm>
#include <set>

namespace coglo {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<const char*, Enum> (&table)[N],
                const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw Error(ErrorCode::validation,
              std::string("unknown ") + what + " '" + std::string(s) + "'", std::string(s));
}

const std::pair<const char*, OrderState> kOrderStates[] = {
    {"announced", OrderState::announced}, {"assigned", OrderState::assigned},
    {"picked_up", OrderState::picked_up}, {"at_exchange", OrderState::at_exchange},
    {"in_transit", OrderState::in_transit}, {"delivered", OrderState::delivered},
    {"failed", OrderState::failed},
};

const std::pair<const char*, StopAction> kStopActions[] = {
    {"depot_start", StopAction::depot_start},
    {"pickup", StopAction::pickup},
    {"delivery", StopAction::delivery},
    {"exchange_handover", StopAction::exchange_handover},
    {"depot_end", StopAction::depot_end},
};

nlohmann::json optional_time(const std::optional<Seconds>& t) {
  if (!t) return nullptr;
  if (is_unreachable(*t)) return "unreachable";
  return *t;
}

std::optional<Seconds> optional_time_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) return kUnreachable;
  return j.get<double>();
}

}  // namespace

Seconds Order::due() const {
  return tw_delivery ? std::min(sla_deadline, tw_delivery->latest) : sla_deadline;
}

const Route* Plan::route_of(std::string_view vehicle) const {
  for (const auto& r : routes) {
    if (r.vehicle == vehicle) return &r;
  }
  return nullptr;
}

Route* Plan::route_of(std::string_view vehicle) {
  for (auto& r : routes) {
    if (r.vehicle == vehicle) return &r;
  }
  return nullptr;
}

Route empty_route(const Vehicle& vehicle) {
  Route r;
  r.vehicle = vehicle.id;
  r.stops.push_back({vehicle.home_depot, StopAction::depot_start, {}, std::nullopt, 0.0, 0.0});
  r.stops.push_back({vehicle.home_depot, StopAction::depot_end, {}, std::nullopt, 0.0, 0.0});
  return r;
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::capacity: return "capacity";
    case ViolationKind::precedence: return "precedence";
    case ViolationKind::shift: return "shift";
    case ViolationKind::unknown_node: return "unknown_node";
    case ViolationKind::duplicate_order: return "duplicate_order";
    case ViolationKind::structural: return "structural";
  }
  return "structural";
}

std::vector<int> running_loads(const Route& route, const OrderBook& orders) {
  std::vector<int> loads;
  loads.reserve(route.stops.size());
  int load = 0;
  for (const auto& stop : route.stops) {
    if (!stop.voided) {
      for (const auto& id : stop.orders) {
        auto it = orders.find(id);
        if (it == orders.end()) continue;
        if (stop.action == StopAction::pickup) load += it->second.size_units;
        if (stop.unloads()) load -= it->second.size_units;
      }
    }
    loads.push_back(load);
  }
  return loads;
}

ValidationReport validate_plan(const Plan& plan, const RoadGraph& graph,
                               const Fleet& fleet, const OrderBook& orders) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, const std::string& vehicle,
                 std::optional<std::size_t> stop, const std::string& order,
                 std::string message) {
    report.violations.push_back({kind, vehicle, stop, order, std::move(message)});
  };

  // Where each order lives: route vehicles with an active stop, unassigned.
  std::map<std::string, std::set<std::string>> homes;
  std::map<std::string, int> unassigned_count;
  std::set<std::string> seen_vehicles;

  for (const auto& route : plan.routes) {
    const auto vit = fleet.find(route.vehicle);
    if (vit == fleet.end()) {
      add(ViolationKind::structural, route.vehicle, std::nullopt, {},
          "route for unknown vehicle '" + route.vehicle + "'");
      continue;
    }
    if (!seen_vehicles.insert(route.vehicle).second) {
      add(ViolationKind::structural, route.vehicle, std::nullopt, {},
          "vehicle has more than one route");
    }
    const Vehicle& vehicle = vit->second;
    const auto& stops = route.stops;
    if (stops.size() < 2 || stops.front().action != StopAction::depot_start ||
        stops.back().action != StopAction::depot_end) {
      add(ViolationKind::structural, route.vehicle, std::nullopt, {},
          "route must begin with depot_start and end with depot_end");
    }

    std::map<std::string, std::size_t> picked_at;
    std::map<std::string, int> deliveries;
    int load = 0;
    for (std::size_t i = 0; i < stops.size(); ++i) {
      const Stop& stop = stops[i];
      if (!graph.find_node(stop.node)) {
        add(ViolationKind::unknown_node, route.vehicle, i, {},
            "stop references unknown node '" + stop.node + "'");
      }
      if ((stop.action == StopAction::depot_start || stop.action == StopAction::depot_end) &&
          (i != 0 && i + 1 != stops.size())) {
        add(ViolationKind::structural, route.vehicle, i, {}, "depot stop inside route");
      }
      if (stop.voided) continue;
      for (const auto& id : stop.orders) {
        const auto oit = orders.find(id);
        if (oit == orders.end()) {
          add(ViolationKind::duplicate_order, route.vehicle, i, id,
              "stop references unknown order '" + id + "'");
          continue;
        }
        homes[id].insert(route.vehicle);
        if (stop.action == StopAction::pickup) {
          if (picked_at.count(id)) {
            add(ViolationKind::duplicate_order, route.vehicle, i, id, "order picked up twice");
          }
          picked_at[id] = i;
          load += oit->second.size_units;
        } else if (stop.unloads()) {
          if (++deliveries[id] > 1) {
            add(ViolationKind::duplicate_order, route.vehicle, i, id, "order delivered twice");
          }
          if (!picked_at.count(id)) {
            add(ViolationKind::precedence, route.vehicle, i, id,
                "delivery of '" + id + "' precedes its pickup");
          }
          load -= oit->second.size_units;
          if (stop.eta) {
            report.lateness_total_min +=
                std::max(0.0, (*stop.eta - oit->second.due()) / 60.0);
          }
        }
      }
      if (load > vehicle.capacity_units) {
        add(ViolationKind::capacity, route.vehicle, i, {},
            "running load " + std::to_string(load) + " exceeds capacity " +
                std::to_string(vehicle.capacity_units));
      }
    }

    if (!stops.empty() && stops.back().eta && *stops.back().eta > vehicle.shift_end) {
      add(ViolationKind::shift, route.vehicle, stops.size() - 1, {},
          is_unreachable(*stops.back().eta) ? "route end unreachable"
                                            : "route ends after shift end");
    }
    for (std::size_t i = 0; i < stops.size(); ++i) {
      if (stops[i].eta && is_unreachable(*stops[i].eta) && i + 1 != stops.size()) {
        add(ViolationKind::shift, route.vehicle, i, {}, "stop unreachable");
        break;
      }
    }
  }

  for (const auto& id : plan.unassigned) {
    if (!orders.count(id)) {
      add(ViolationKind::duplicate_order, {}, std::nullopt, id,
          "unassigned list references unknown order '" + id + "'");
    }
    if (++unassigned_count[id] > 1) {
      add(ViolationKind::duplicate_order, {}, std::nullopt, id, "order listed twice as unassigned");
    }
    if (homes.count(id)) {
      add(ViolationKind::duplicate_order, {}, std::nullopt, id,
          "order is both routed and unassigned");
    }
  }
  for (const auto& [id, vehicles] : homes) {
    if (vehicles.size() > 1) {
      add(ViolationKind::duplicate_order, *vehicles.begin(), std::nullopt, id,
          "order appears on more than one route");
    }
  }
  return report;
}

void compute_etas(Route& route, const Vehicle& vehicle, TravelModel& travel, Seconds t0,
                  const OrderBook* orders, std::size_t frozen) {
  auto& stops = route.stops;
  if (stops.empty()) return;
  frozen = std::min(frozen, stops.size());
  std::size_t i = frozen;
  Seconds depart = 0.0;
  if (frozen == 0) {
    stops[0].eta = std::max(t0, vehicle.shift_start);
    depart = *stops[0].eta + stops[0].service_time_s + stops[0].slack_s;
    i = 1;
  } else {
    const Stop& last = stops[frozen - 1];
    const Seconds eta = last.eta.value_or(t0);
    depart = std::max(eta + last.service_time_s + last.slack_s, t0);
  }
  for (; i < stops.size(); ++i) {
    if (is_unreachable(depart)) {
      stops[i].eta = kUnreachable;
      continue;
    }
    const auto leg = travel.leg(stops[i - 1].node, stops[i].node);
    Seconds eta = depart + leg.time_s;
    if (orders && stops[i].action == StopAction::pickup && !is_unreachable(eta)) {
      for (const auto& id : stops[i].orders) {
        auto it = orders->find(id);
        if (it != orders->end() && it->second.ready_time) {
          eta = std::max(eta, *it->second.ready_time);
        }
      }
    }
    stops[i].eta = eta;
    depart = eta + stops[i].service_time_s + stops[i].slack_s;
  }
}

bool is_legal_transition(OrderState from, OrderState to) {
  using S = OrderState;
  switch (from) {
    case S::announced: return to == S::assigned || to == S::failed;
    case S::assigned: return to == S::picked_up || to == S::announced || to == S::failed;
    case S::picked_up: return to == S::in_transit || to == S::at_exchange;
    case S::in_transit:
      return to == S::at_exchange || to == S::delivered || to == S::failed;
    case S::at_exchange:
      return to == S::in_transit || to == S::delivered || to == S::failed;
    case S::delivered:
    case S::failed: return false;
  }
  return false;
}

Order transition(Order order, OrderState target) {
  if (!is_legal_transition(order.state, target)) {
    throw Error(ErrorCode::conflict,
                "illegal transition for order '" + order.id + "': " +
                    to_string(order.state) + " -> " + to_string(target),
                std::string(to_string(order.state)) + "->" + to_string(target));
  }
  order.state = target;
  return order;
}

const char* to_string(OrderState state) {
  for (const auto& [name, value] : kOrderStates) {
    if (value == state) return name;
  }
  return "announced";
}

OrderState order_state_from_string(std::string_view s) {
  return parse_enum(s, kOrderStates, "order state");
}

const char* to_string(StopAction action) {
  for (const auto& [name, value] : kStopActions) {
    if (value == action) return name;
  }
  return "depot_start";
}

StopAction stop_action_from_string(std::string_view s) {
  return parse_enum(s, kStopActions, "stop action");
}

const char* to_string(VehicleStatus status) {
  switch (status) {
    case VehicleStatus::available: return "available";
    case VehicleStatus::en_route: return "en_route";
    case VehicleStatus::broken: return "broken";
  }
  return "available";
}

nlohmann::json vehicle_to_json(const Vehicle& v) {
  return {{"id", v.id},
          {"capacity_units", v.capacity_units},
          {"home_depot", v.home_depot},
          {"shift", {v.shift_start, v.shift_end}},
          {"cost_per_km", v.cost_per_km},
          {"fixed_cost", v.fixed_cost},
          {"fuel_base_l_per_km", v.fuel_base_l_per_km},
          {"fuel_load_coeff_l_per_km", v.fuel_load_coeff_l_per_km},
          {"status", to_string(v.status)},
          {"fixed_route", v.fixed_route}};
}

Vehicle vehicle_from_json(const nlohmann::json& j) {
  Vehicle v;
  try {
    v.id = j.at("id").get<std::string>();
    v.capacity_units = j.at("capacity_units").get<int>();
    v.home_depot = j.at("home_depot").get<std::string>();
    v.shift_start = j.at("shift").at(0).get<double>();
    v.shift_end = j.at("shift").at(1).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("vehicle: ") + e.what(),
                j.value("id", std::string{}));
  }
  v.cost_per_km = j.value("cost_per_km", 0.0);
  v.fixed_cost = j.value("fixed_cost", 0.0);
  v.fuel_base_l_per_km = j.value("fuel_base_l_per_km", 0.0);
  v.fuel_load_coeff_l_per_km = j.value("fuel_load_coeff_l_per_km", 0.0);
  v.fixed_route = j.value("fixed_route", false);
  const std::string status = j.value("status", std::string("available"));
  v.status = status == "broken"     ? VehicleStatus::broken
             : status == "en_route" ? VehicleStatus::en_route
                                    : VehicleStatus::available;
  if (v.capacity_units <= 0) {
    throw Error(ErrorCode::validation, "vehicle '" + v.id + "': capacity must be positive", v.id);
  }
  if (!(v.shift_start < v.shift_end)) {
    throw Error(ErrorCode::validation, "vehicle '" + v.id + "': shift start must precede end",
                v.id);
  }
  if (v.fuel_base_l_per_km < 0.0 || v.fuel_load_coeff_l_per_km < 0.0) {
    throw Error(ErrorCode::validation, "vehicle '" + v.id + "': negative fuel coefficient",
                v.id);
  }
  return v;
}

nlohmann::json order_to_json(const Order& o) {
  nlohmann::json j = {{"id", o.id},
                      {"size_units", o.size_units},
                      {"pickup", o.pickup},
                      {"delivery", o.delivery},
                      {"announce_time", o.announce_time},
                      {"sla_deadline", o.sla_deadline},
                      {"priority", o.priority},
                      {"state", to_string(o.state)}};
  if (o.tw_delivery) j["tw_delivery"] = {o.tw_delivery->earliest, o.tw_delivery->latest};
  if (o.ready_time) j["ready_time"] = *o.ready_time;
  return j;
}

Order order_from_json(const nlohmann::json& j) {
  Order o;
  try {
    o.id = j.at("id").get<std::string>();
    o.size_units = j.at("size_units").get<int>();
    o.pickup = j.at("pickup").get<std::string>();
    o.delivery = j.at("delivery").get<std::string>();
    o.sla_deadline = j.at("sla_deadline").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("order: ") + e.what(),
                j.value("id", std::string{}));
  }
  o.announce_time = j.value("announce_time", 0.0);
  o.priority = j.value("priority", 0);
  if (j.contains("tw_delivery") && !j.at("tw_delivery").is_null()) {
    o.tw_delivery = TimeWindow{j.at("tw_delivery").at(0).get<double>(),
                               j.at("tw_delivery").at(1).get<double>()};
  }
  if (j.contains("ready_time") && !j.at("ready_time").is_null()) {
    o.ready_time = j.at("ready_time").get<double>();
  }
  if (j.contains("state")) o.state = order_state_from_string(j.at("state").get<std::string>());
  if (o.size_units <= 0) {
    throw Error(ErrorCode::validation, "order '" + o.id + "': size must be positive", o.id);
  }
  if (o.pickup == o.delivery) {
    throw Error(ErrorCode::validation, "order '" + o.id + "': pickup equals delivery", o.id);
  }
  if (o.tw_delivery && !(o.tw_delivery->earliest < o.tw_delivery->latest)) {
    throw Error(ErrorCode::validation, "order '" + o.id + "': empty time window", o.id);
  }
  return o;
}

nlohmann::json route_to_json(const Route& route) {
  nlohmann::json stops = nlohmann::json::array();
  for (const auto& s : route.stops) {
    nlohmann::json js = {{"node", s.node},
                         {"action", to_string(s.action)},
                         {"orders", s.orders},
                         {"eta", optional_time(s.eta)},
                         {"service_time_s", s.service_time_s},
                         {"slack_s", s.slack_s}};
    if (s.voided) js["voided"] = true;
    stops.push_back(std::move(js));
  }
  return {{"vehicle", route.vehicle}, {"stops", std::move(stops)}};
}

nlohmann::json plan_to_json(const Plan& plan) {
  nlohmann::json routes = nlohmann::json::array();
  for (const auto& r : plan.routes) routes.push_back(route_to_json(r));
  return {{"routes", std::move(routes)},
          {"unassigned", plan.unassigned},
          {"objective", is_unreachable(plan.objective) ? nlohmann::json(nullptr)
                                                       : nlohmann::json(plan.objective)}};
}

Plan plan_from_json(const nlohmann::json& j) {
  Plan plan;
  for (const auto& jr : j.at("routes")) {
    Route r;
    r.vehicle = jr.at("vehicle").get<std::string>();
    for (const auto& js : jr.at("stops")) {
      Stop s;
      s.node = js.at("node").get<std::string>();
      s.action = stop_action_from_string(js.at("action").get<std::string>());
      s.orders = js.value("orders", std::vector<std::string>{});
      s.eta = js.contains("eta") ? optional_time_from(js.at("eta")) : std::nullopt;
      s.service_time_s = js.value("service_time_s", 0.0);
      s.slack_s = js.value("slack_s", 0.0);
      s.voided = js.value("voided", false);
      r.stops.push_back(std::move(s));
    }
    plan.routes.push_back(std::move(r));
  }
  plan.unassigned = j.value("unassigned", std::vector<std::string>{});
  plan.objective = j.contains("objective") && !j.at("objective").is_null()
                       ? j.at("objective").get<double>()
                       : kUnreachable;
  return plan;
}

nlohmann::json report_to_json(const ValidationReport& report) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : report.violations) {
    violations.push_back({{"kind", to_string(v.kind)},
                          {"vehicle", v.vehicle},
                          {"stop_index", v.stop_index ? nlohmann::json(*v.stop_index)
                                                      : nlohmann::json(nullptr)},
                          {"order", v.order},
                          {"message", v.message}});
  }
  return {{"violations", violations}, {"lateness_total_min", report.lateness_total_min}};
}

nlohmann::json plan_to_geojson(const Plan& plan, TravelModel& travel,
                               const OrderBook& orders) {
  nlohmann::json features = nlohmann::json::array();
  const RoadGraph& graph = travel.graph();
  for (const auto& route : plan.routes) {
    const auto loads = running_loads(route, orders);
    for (std::size_t i = 1; i < route.stops.size(); ++i) {
      const Stop& a = route.stops[i - 1];
      const Stop& b = route.stops[i];
      nlohmann::json feature;
      if (auto path = travel.path(a.node, b.node)) {
        feature = path_to_geojson(graph, *path, a.node);
      } else {
        const Node& na = graph.node(a.node);
        const Node& nb = graph.node(b.node);
        feature = {{"type", "Feature"},
                   {"geometry",
                    {{"type", "LineString"},
                     {"coordinates", {{na.lon, na.lat}, {nb.lon, nb.lat}}}}},
                   {"properties", nlohmann::json::object()}};
      }
      feature["properties"]["vehicle"] = route.vehicle;
      feature["properties"]["load"] = loads[i - 1];
      feature["properties"]["eta"] = optional_time(b.eta);
      feature["properties"]["leg"] = i - 1;
      features.push_back(std::move(feature));
    }
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace coglo
