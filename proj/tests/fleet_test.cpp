#include <gtest/gtest.h>

#include <random>

#include "coglo/fleet.h"
#include "coglo/traffic.h"
#include "fixtures.h"

using namespace coglo;
using coglo::testing::make_order;
using coglo::testing::make_vehicle;

namespace {

constexpr Seconds k0800 = 8 * 3600.0;

Stop stop(const std::string& node, StopAction action, std::vector<std::string> orders = {},
          Seconds service = 0.0) {
  Stop s;
  s.node = node;
  s.action = action;
  s.orders = std::move(orders);
  s.service_time_s = service;
  return s;
}

Route route_of(const std::string& vehicle, const std::string& depot, std::vector<Stop> middle) {
  Route r;
  r.vehicle = vehicle;
  r.stops.push_back(stop(depot, StopAction::depot_start));
  for (auto& s : middle) r.stops.push_back(std::move(s));
  r.stops.push_back(stop(depot, StopAction::depot_end));
  return r;
}

// Depot to customer: one 10 km edge at 60 km/h, 600 s.
RoadGraph single_leg() {
  return coglo::testing::GraphBuilder()
      .node("dep", 0.0, 0.0, NodeKind::depot)
      .node("cus", 10.0, 0.0, NodeKind::customer)
      .road("dep", "cus", 10000.0, 60.0)
      .build();
}

}  // namespace

TEST(ValidatePlan, EmptyRoutesAreClean) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Fleet fleet = {{"v1", make_vehicle("v1", 10, "d")}, {"v2", make_vehicle("v2", 10, "d")}};
  Plan plan;
  plan.routes = {empty_route(fleet.at("v1")), empty_route(fleet.at("v2"))};
  const auto report = validate_plan(plan, g, fleet, {});
  EXPECT_TRUE(report.feasible());
  EXPECT_EQ(report.lateness_total_min, 0.0);
}

TEST(ValidatePlan, CapacityOverflowAtOffendingStop) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Fleet fleet = {{"v1", make_vehicle("v1", 10, "d")}};
  const OrderBook orders = {{"a", make_order("a", "k1", "k2", 6)},
                            {"b", make_order("b", "k1", "k2", 5)}};
  Plan plan;
  plan.routes = {route_of("v1", "d",
                          {stop("k1", StopAction::pickup, {"a"}),
                           stop("k1", StopAction::pickup, {"b"}),
                           stop("k2", StopAction::delivery, {"a", "b"})})};
  const auto report = validate_plan(plan, g, fleet, orders);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].kind, ViolationKind::capacity);
  EXPECT_EQ(report.violations[0].stop_index, 2u);
  EXPECT_EQ(running_loads(plan.routes[0], orders), (std::vector<int>{0, 6, 11, 0, 0}));
}

TEST(ValidatePlan, DeliveryBeforePickup) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Fleet fleet = {{"v1", make_vehicle("v1", 10, "d")}};
  const OrderBook orders = {{"a", make_order("a", "k1", "k2")}};
  Plan plan;
  plan.routes = {route_of("v1", "d",
                          {stop("k2", StopAction::delivery, {"a"}),
                           stop("k1", StopAction::pickup, {"a"})})};
  const auto report = validate_plan(plan, g, fleet, orders);
  ASSERT_FALSE(report.feasible());
  EXPECT_EQ(report.violations[0].kind, ViolationKind::precedence);
  EXPECT_EQ(report.violations[0].order, "a");
}

TEST(ValidatePlan, StructuralAndDuplicateProblems) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Fleet fleet = {{"v1", make_vehicle("v1", 10, "d")}, {"v2", make_vehicle("v2", 10, "d")}};
  const OrderBook orders = {{"a", make_order("a", "k1", "k2")}};
  Plan plan;
  plan.routes = {route_of("v1", "d",
                          {stop("k1", StopAction::pickup, {"a"}),
                           stop("k2", StopAction::delivery, {"a"})}),
                 route_of("v2", "d", {stop("zz", StopAction::pickup, {"a"})})};
  plan.unassigned = {"a"};
  const auto report = validate_plan(plan, g, fleet, orders);
  std::set<ViolationKind> kinds;
  for (const auto& v : report.violations) kinds.insert(v.kind);
  EXPECT_TRUE(kinds.count(ViolationKind::unknown_node));
  EXPECT_TRUE(kinds.count(ViolationKind::duplicate_order));
}

TEST(ValidatePlan, ShiftEndAndLateness) {
  const RoadGraph g = single_leg();
  const Fleet fleet = {{"v1", make_vehicle("v1", 5, "dep", k0800, k0800 + 1000.0)}};
  OrderBook orders = {{"a", make_order("a", "dep", "cus", 1, k0800 + 300.0)}};
  Plan plan;
  plan.routes = {route_of("v1", "dep",
                          {stop("dep", StopAction::pickup, {"a"}),
                           stop("cus", StopAction::delivery, {"a"})})};
  TravelModel travel(g, FreeFlow{}, k0800);
  compute_etas(plan.routes[0], fleet.at("v1"), travel, k0800, &orders);
  const auto report = validate_plan(plan, g, fleet, orders);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].kind, ViolationKind::shift);
  EXPECT_DOUBLE_EQ(report.lateness_total_min, 5.0);  // arrives 08:10, due 08:05
}

TEST(ValidatePlan, Pure) {
  const RoadGraph g = coglo::testing::line_graph(3);
  const Fleet fleet = {{"v1", make_vehicle("v1", 2, "d")}};
  const OrderBook orders = {{"a", make_order("a", "k1", "k3", 3)}};
  Plan plan;
  plan.routes = {route_of("v1", "d",
                          {stop("k3", StopAction::delivery, {"a"}),
                           stop("k1", StopAction::pickup, {"a"})})};
  const auto first = report_to_json(validate_plan(plan, g, fleet, orders));
  const auto second = report_to_json(validate_plan(plan, g, fleet, orders));
  EXPECT_EQ(first, second);
}

TEST(ComputeEtas, SingleDelivery) {
  const RoadGraph g = single_leg();
  const Vehicle v = make_vehicle("v1", 5, "dep", 0.0, 86400.0);
  Route r = route_of("v1", "dep", {stop("cus", StopAction::delivery, {"a"})});
  TravelModel travel(g, FreeFlow{}, k0800);
  compute_etas(r, v, travel, k0800);
  EXPECT_EQ(*r.stops[0].eta, k0800);
  EXPECT_EQ(*r.stops[1].eta, k0800 + 600.0);
  EXPECT_EQ(*r.stops[2].eta, k0800 + 1200.0);
}

TEST(ComputeEtas, HalvedSpeedDoublesLeg) {
  const RoadGraph g = single_leg();
  TrafficEvent ev;
  ev.id = "slow";
  ev.scope = std::vector<std::string>{"dep-cus"};
  ev.severity = 0.5;
  ev.effect = SpeedMultiplier{0.5};
  ev.valid_from = 0.0;
  ev.valid_to = 86400.0;
  const EventContext ctx(g, {ev});
  const Vehicle v = make_vehicle("v1", 5, "dep");
  Route r = route_of("v1", "dep", {stop("cus", StopAction::delivery, {"a"})});
  TravelModel travel(g, ctx, k0800);
  compute_etas(r, v, travel, k0800);
  EXPECT_EQ(*r.stops[1].eta, k0800 + 1200.0);
}

TEST(ComputeEtas, UnreachablePropagates) {
  const RoadGraph g = coglo::testing::GraphBuilder()
                          .node("dep", 0, 0, NodeKind::depot)
                          .node("a", 1, 0)
                          .node("b", 2, 0)
                          .road("dep", "a", 1000, 36)
                          .road("a", "b", 1000, 36)
                          .build();
  TrafficEvent ev;
  ev.id = "cut";
  ev.kind = EventKind::closure;
  ev.scope = std::vector<std::string>{"a-b", "b-a"};
  ev.severity = 1.0;
  ev.effect = Closed{};
  ev.valid_from = 0.0;
  ev.valid_to = 86400.0;
  const EventContext ctx(g, {ev});
  const Vehicle v = make_vehicle("v1", 5, "dep");
  Route r = route_of("v1", "dep",
                     {stop("a", StopAction::delivery, {"x"}),
                      stop("b", StopAction::delivery, {"y"}),
                      stop("a", StopAction::delivery, {"z"})});
  TravelModel travel(g, ctx, 0.0);
  compute_etas(r, v, travel, 0.0);
  EXPECT_EQ(*r.stops[1].eta, 100.0);
  EXPECT_TRUE(is_unreachable(*r.stops[2].eta));
  EXPECT_TRUE(is_unreachable(*r.stops[3].eta));
  EXPECT_TRUE(is_unreachable(*r.stops[4].eta));
}

TEST(ComputeEtas, ServiceShiftStartReadyTimeAndFrozenPrefix) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Vehicle v = make_vehicle("v1", 5, "d", 1000.0, 86400.0);
  OrderBook orders = {{"a", make_order("a", "k1", "k2")}};
  orders["a"].ready_time = 1500.0;
  Route r = route_of("v1", "d",
                     {stop("k1", StopAction::pickup, {"a"}, 60.0),
                      stop("k2", StopAction::delivery, {"a"}, 60.0)});
  TravelModel travel(g, FreeFlow{}, 0.0);
  compute_etas(r, v, travel, 0.0, &orders);
  EXPECT_EQ(*r.stops[0].eta, 1000.0);  // shift start
  EXPECT_EQ(*r.stops[1].eta, 1500.0);  // waits for the parcel
  EXPECT_EQ(*r.stops[2].eta, 1660.0);
  EXPECT_EQ(*r.stops[3].eta, 1920.0);

  // With two stops frozen, the rest restarts from max(frozen departure, t0).
  compute_etas(r, v, travel, 2000.0, &orders, 2);
  EXPECT_EQ(*r.stops[1].eta, 1500.0);
  EXPECT_EQ(*r.stops[2].eta, 2100.0);
}

TEST(ComputeEtasProperty, MonotoneAlongRoute) {
  const RoadGraph g = coglo::testing::line_graph(6);
  const Vehicle v = make_vehicle("v1", 50, "d");
  TravelModel travel(g, FreeFlow{}, 0.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    std::vector<Stop> middle;
    for (int k = 0; k < 8; ++k) {
      middle.push_back(stop("k" + std::to_string(1 + rng() % 6), StopAction::delivery, {"o"},
                            static_cast<double>(rng() % 200)));
    }
    Route r = route_of("v1", "d", middle);
    compute_etas(r, v, travel, static_cast<double>(rng() % 5000));
    for (std::size_t k = 1; k < r.stops.size(); ++k) {
      EXPECT_GE(*r.stops[k].eta, *r.stops[k - 1].eta);
    }
  }
}

TEST(Transition, LegalAndIllegalSteps) {
  Order o = make_order("o", "a", "b");
  o = transition(o, OrderState::assigned);
  EXPECT_EQ(o.state, OrderState::assigned);

  Order delivered = make_order("d", "a", "b");
  delivered.state = OrderState::delivered;
  try {
    transition(delivered, OrderState::picked_up);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conflict);
    EXPECT_NE(std::string(e.what()).find("delivered"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("picked_up"), std::string::npos);
  }

  Order picked = make_order("p", "a", "b");
  picked.state = OrderState::picked_up;
  EXPECT_EQ(transition(picked, OrderState::at_exchange).state, OrderState::at_exchange);
}

TEST(Transition, TerminalStatesAreFinal) {
  for (auto from : {OrderState::delivered, OrderState::failed}) {
    for (int t = 0; t <= static_cast<int>(OrderState::failed); ++t) {
      EXPECT_FALSE(is_legal_transition(from, static_cast<OrderState>(t)));
    }
  }
  EXPECT_TRUE(is_legal_transition(OrderState::announced, OrderState::failed));
  EXPECT_FALSE(is_legal_transition(OrderState::announced, OrderState::delivered));
}

TEST(Order, DueIsTightenedByWindow) {
  Order o = make_order("o", "a", "b", 1, 5000.0);
  EXPECT_EQ(o.due(), 5000.0);
  o.tw_delivery = TimeWindow{100.0, 4000.0};
  EXPECT_EQ(o.due(), 4000.0);
}

TEST(Json, OrderVehiclePlanRoundTrip) {
  Order o = make_order("o1", "a", "b", 2, 7200.0);
  o.tw_delivery = TimeWindow{3600.0, 7000.0};
  o.ready_time = 100.0;
  EXPECT_EQ(order_from_json(order_to_json(o)), o);

  const Vehicle v = make_vehicle("v1", 8, "d", 10.0, 20.0);
  EXPECT_EQ(vehicle_from_json(vehicle_to_json(v)), v);

  Plan plan;
  plan.routes = {route_of("v1", "d", {stop("k1", StopAction::pickup, {"o1"}, 120.0)})};
  plan.routes[0].stops[0].eta = 10.0;
  plan.routes[0].stops[1].eta = kUnreachable;
  plan.routes[0].stops[1].voided = true;
  plan.unassigned = {"o2"};
  plan.objective = 12.5;
  EXPECT_EQ(plan_from_json(plan_to_json(plan)), plan);
}

TEST(Json, RejectsBadOrders) {
  auto j = order_to_json(make_order("o1", "a", "b"));
  j["delivery"] = "a";
  EXPECT_THROW(order_from_json(j), Error);
  j = order_to_json(make_order("o1", "a", "b"));
  j["tw_delivery"] = {10.0, 5.0};
  EXPECT_THROW(order_from_json(j), Error);
  j = order_to_json(make_order("o1", "a", "b"));
  j.erase("sla_deadline");
  EXPECT_THROW(order_from_json(j), Error);
}

TEST(GeoJson, OneFeaturePerLeg) {
  const RoadGraph g = coglo::testing::line_graph(2);
  const Vehicle v = make_vehicle("v1", 5, "d");
  const OrderBook orders = {{"a", make_order("a", "k1", "k2")}};
  Plan plan;
  plan.routes = {route_of("v1", "d",
                          {stop("k1", StopAction::pickup, {"a"}),
                           stop("k2", StopAction::delivery, {"a"})})};
  TravelModel travel(g, FreeFlow{}, 0.0);
  compute_etas(plan.routes[0], v, travel, 0.0, &orders);
  const auto fc = plan_to_geojson(plan, travel, orders);
  ASSERT_EQ(fc["features"].size(), 3u);
  EXPECT_EQ(fc["features"][1]["properties"]["vehicle"], "v1");
  EXPECT_EQ(fc["features"][1]["properties"]["load"], 1);
  EXPECT_EQ(fc["features"][1]["properties"]["eta"], 200.0);
}
