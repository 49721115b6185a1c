#include "coglo/simulator.h"

#include <gtest/gtest.h>

#include <set>

#include "fixtures.h"

namespace coglo {
namespace {

using coglo::testing::distance_only;
using coglo::testing::line_graph;
using coglo::testing::make_order;
using coglo::testing::make_vehicle;
using nlohmann::json;

constexpr Policy kPolicies[] = {Policy::static_plan, Policy::reactive, Policy::anticipatory};

Scenario line_scenario(int n, std::vector<Vehicle> vehicles, std::vector<Order> orders) {
  Scenario sc;
  const RoadGraph g = line_graph(n);
  sc.graph_doc = graph_to_json(g);
  sc.graph = std::make_shared<RoadGraph>(g);
  for (auto& v : vehicles) sc.fleet[v.id] = v;
  sc.orders = std::move(orders);
  sc.seed = 7;
  sc.knobs.weights = distance_only();
  sc.knobs.service_time_s = 120.0;
  return sc;
}

double km_of(const Path& p) { return p.total_distance_m / 1000.0; }

TraceEntry entry(const std::string& kind, json payload) { return {0.0, 0, kind, std::move(payload)}; }

TEST(Run, EmptyScenarioGivesEmptyTraceAndZeroKpis) {
  const Scenario sc = line_scenario(2, {make_vehicle("v1", 10, "d")}, {});
  for (const Policy p : kPolicies) {
    const SimResult r = run(sc, p);
    EXPECT_TRUE(r.trace.empty()) << to_string(p);
    EXPECT_EQ(r.report, KpiReport{}) << to_string(p);
  }
}

TEST(Run, OneOrderIsDeliveredOnTime) {
  const Scenario sc = line_scenario(2, {make_vehicle("v1", 10, "d")},
                                    {make_order("o1", "k1", "k2", 1, 1000.0)});
  for (const Policy p : kPolicies) {
    const SimResult r = run(sc, p);
    EXPECT_EQ(r.report.delivered, 1u) << to_string(p);
    EXPECT_DOUBLE_EQ(r.report.on_time_rate, 1.0);
    // d→k1 100 s, 120 s service, k1→k2 100 s.
    const auto it = std::find_if(r.trace.begin(), r.trace.end(),
                                 [](const TraceEntry& e) { return e.kind == "delivery_attempt"; });
    ASSERT_NE(it, r.trace.end());
    EXPECT_DOUBLE_EQ(it->t, 320.0);
    EXPECT_NEAR(r.report.total_distance_km, 4.0, 1e-9);
    EXPECT_NEAR(r.report.load_factor, 1.0 * 1.0 / (10.0 * 4.0), 1e-12);
    EXPECT_TRUE(r.plan_violations.empty());
  }
}

TEST(Run, SameSeedGivesIdenticalBytes) {
  XbParams params;
  params.miss_probability = 0.3;
  params.demand_rate_per_hour = 1.0;
  const Scenario sc = generate_xb_scenario(11, params);
  for (const Policy p : kPolicies) {
    const SimResult a = run(sc, p);
    const SimResult b = run(sc, p);
    EXPECT_EQ(trace_to_jsonl(a.trace), trace_to_jsonl(b.trace)) << to_string(p);
    EXPECT_EQ(kpis_to_json(a.report).dump(), kpis_to_json(b.report).dump());
  }
}

TEST(Run, BreakdownIsRescuedOnlyWhenReactive) {
  Scenario sc = line_scenario(4, {make_vehicle("v1", 10, "d"), make_vehicle("v2", 10, "d")},
                              {make_order("o1", "k1", "k4")});
  sc.knobs.weights.w_vehicle = 100.0;
  const SimResult plain = run(sc, Policy::static_plan);
  std::string carrier;
  for (const auto& e : plain.trace) {
    if (e.kind == "depart" && e.payload.at("load").get<int>() > 0) {
      carrier = e.payload.at("vehicle").get<std::string>();
    }
  }
  ASSERT_FALSE(carrier.empty());
  // The carrier left k1 at 220 s and is on its way to k4.
  sc.breakdowns.push_back({carrier, 250.0});
  const SimResult frozen = run(sc, Policy::static_plan);
  EXPECT_EQ(frozen.report.delivered, 0u);
  EXPECT_EQ(frozen.report.unassigned_at_end, 1u);
  const SimResult rescued = run(sc, Policy::reactive);
  EXPECT_EQ(rescued.report.delivered, 1u);
  EXPECT_EQ(rescued.report.recommendations.accepted, rescued.report.recommendations.proposed);
  EXPECT_TRUE(rescued.plan_violations.empty());
}

TEST(Run, StaticMissFailsReactiveRetries) {
  Scenario sc = line_scenario(3, {make_vehicle("v1", 10, "d")},
                              {make_order("o1", "d", "k3"), make_order("o2", "d", "k2")});
  sc.noise.miss_probability = 1.0;
  const SimResult s = run(sc, Policy::static_plan);
  EXPECT_EQ(s.report.delivered, 0u);
  EXPECT_EQ(s.report.failed, 2u);
  EXPECT_EQ(s.report.missed, 2u);
  const SimResult r = run(sc, Policy::reactive);
  EXPECT_EQ(r.report.delivered, 0u);
  EXPECT_EQ(r.report.failed, 2u);
  // Three attempts per order before giving up.
  EXPECT_EQ(r.report.missed, 6u);
}

TEST(Run, LateOrdersWaitForAReactivePolicy) {
  Order late = make_order("o2", "k1", "k2");
  late.announce_time = 50.0;
  const Scenario sc = line_scenario(2, {make_vehicle("v1", 10, "d")},
                                    {make_order("o1", "k1", "k2"), late});
  const SimResult s = run(sc, Policy::static_plan);
  EXPECT_EQ(s.report.delivered, 1u);
  EXPECT_EQ(s.report.unassigned_at_end, 1u);
  const SimResult r = run(sc, Policy::reactive);
  EXPECT_EQ(r.report.delivered, 2u);
}

TEST(Run, MalformedScenarioIsRejectedUpFront) {
  Scenario sc = line_scenario(2, {make_vehicle("v1", 10, "d")}, {make_order("o1", "k1", "zz")});
  try {
    run(sc, Policy::reactive);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_EQ(e.detail(), "zz");
  }
  json doc = scenario_to_json(line_scenario(2, {make_vehicle("v1", 10, "d")}, {}));
  doc.erase("seed");
  EXPECT_THROW(scenario_from_json(doc), Error);
  doc = scenario_to_json(line_scenario(2, {make_vehicle("v1", 10, "d")}, {}));
  doc["breakdowns"] = json::array({{{"vehicle", "ghost"}, {"at", 5.0}}});
  EXPECT_THROW(scenario_from_json(doc), Error);
  EXPECT_THROW(policy_from_string("greedy"), Error);
}

TEST(ScenarioJson, RoundTrips) {
  XbParams params;
  params.miss_probability = 0.2;
  Scenario sc = generate_xb_scenario(3, params);
  TrafficEvent jam;
  jam.id = "jam";
  jam.kind = EventKind::congestion;
  jam.scope = std::vector<std::string>{"exA-m"};
  jam.severity = 0.5;
  jam.effect = SpeedMultiplier{0.5};
  jam.valid_from = 9 * 3600.0;
  jam.valid_to = 10 * 3600.0;
  sc.events.push_back(jam);
  sc.breakdowns.push_back({"vA1", 9 * 3600.0});
  const json once = scenario_to_json(sc);
  const json twice = scenario_to_json(scenario_from_json(once));
  EXPECT_EQ(once.dump(), twice.dump());
}

TEST(Kpis, SaturatedLoopHasLoadFactorOne) {
  Fleet fleet{{"v", make_vehicle("v", 10, "d")}};
  const SimTrace t = {entry("depart", {{"vehicle", "v"}, {"km", 60.0}, {"load", 10}}),
                      entry("depart", {{"vehicle", "v"}, {"km", 40.0}, {"load", 10}})};
  EXPECT_DOUBLE_EQ(kpis(t, fleet, {}).load_factor, 1.0);
}

TEST(Kpis, HalfLoadForHalfTheDistanceIsAQuarter) {
  Fleet fleet{{"v", make_vehicle("v", 10, "d")}};
  const SimTrace t = {entry("depart", {{"vehicle", "v"}, {"km", 50.0}, {"load", 5}}),
                      entry("depart", {{"vehicle", "v"}, {"km", 50.0}, {"load", 0}})};
  EXPECT_DOUBLE_EQ(kpis(t, fleet, {}).load_factor, 0.25);
}

TEST(Kpis, FuelIsLinearInLoadFraction) {
  Vehicle v = make_vehicle("v", 10, "d");
  v.fuel_base_l_per_km = 0.1;
  v.fuel_load_coeff_l_per_km = 0.05;
  const SimTrace t = {entry("depart", {{"vehicle", "v"}, {"km", 100.0}, {"load", 5}})};
  EXPECT_NEAR(kpis(t, {{"v", v}}, {}).total_fuel_l, 12.5, 1e-12);
}

TEST(Kpis, CostCountsUsedVehiclesKmAndLateness) {
  Vehicle a = make_vehicle("a", 10, "d");
  a.fixed_cost = 30.0;
  a.cost_per_km = 2.0;
  Vehicle idle = make_vehicle("idle", 10, "d");
  idle.fixed_cost = 1000.0;
  ObjectiveWeights w;
  w.w_late = 0.5;
  const SimTrace t = {
      entry("depart", {{"vehicle", "a"}, {"km", 10.0}, {"load", 1}}),
      entry("depart", {{"vehicle", "idle"}, {"km", 0.0}, {"load", 0}}),
      entry("delivery_attempt",
            {{"parcels", json::array({{{"order", "x"}, {"on_time", false}, {"late_min", 8.0}},
                                      {{"order", "y"}, {"on_time", true}, {"late_min", 0.0}}})}}),
      entry("delivery_missed", json::object()),
      entry("order_closed", {{"order", "z"}, {"outcome", "failed"}}),
  };
  const KpiReport r = kpis(t, {{"a", a}, {"idle", idle}}, w);
  EXPECT_DOUBLE_EQ(r.total_cost, 30.0 + 20.0 + 4.0);
  EXPECT_EQ(r.delivered, 2u);
  EXPECT_DOUBLE_EQ(r.on_time_rate, 0.5);
  EXPECT_EQ(r.missed, 1u);
  EXPECT_EQ(r.failed, 1u);
}

TEST(Compare, IdenticalReportsHaveZeroDeltas) {
  KpiReport a;
  a.total_distance_km = 12.0;
  a.load_factor = 0.4;
  for (const auto& row : compare(a, a).rows) EXPECT_EQ(row.delta, 0.0) << row.kpi;
}

TEST(Compare, DistanceDropIsNegative) {
  KpiReport a, b;
  a.total_distance_km = 100.0;
  b.total_distance_km = 80.0;
  const KpiDelta& d = compare(a, b).row("total_distance_km");
  EXPECT_DOUBLE_EQ(d.delta, -20.0);
  ASSERT_TRUE(d.percent.has_value());
  EXPECT_DOUBLE_EQ(*d.percent, -20.0);
  EXPECT_TRUE(d.improved());
}

TEST(Compare, ZeroBaselineHasNoPercent) {
  KpiReport a, b;
  b.total_fuel_l = 3.0;
  const DeltaReport r = compare(a, b);
  EXPECT_FALSE(r.row("total_fuel_l").percent.has_value());
  EXPECT_EQ(delta_to_json(r)["rows"][2]["percent"], "undefined");
  EXPECT_NE(delta_table(r).find("undefined"), std::string::npos);
}

TEST(Trace, JsonLinesRoundTrip) {
  const SimResult r = run(generate_xb_scenario(5, {}), Policy::reactive);
  const std::string text = trace_to_jsonl(r.trace);
  EXPECT_EQ(trace_to_jsonl(trace_from_jsonl(text)), text);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(r.trace.size()));
}

TEST(GenerateXb, NoParcelsIsAValidEmptyScenario) {
  XbParams params;
  params.near = params.inland = 0;
  const Scenario sc = generate_xb_scenario(1, params);
  EXPECT_TRUE(sc.orders.empty());
  EXPECT_NO_THROW(validate_scenario(sc));
  EXPECT_TRUE(run(sc, Policy::reactive).trace.empty());
}

TEST(GenerateXb, GeometrySeparatesNearAndInlandParcels) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    XbParams params;
    params.near = 8;
    params.inland = 4;
    std::vector<XbGeometryCheck> checks;
    const Scenario sc = generate_xb_scenario(seed, params, &checks);
    ASSERT_EQ(checks.size(), sc.orders.size());
    const RoadGraph& g = *sc.graph;
    FreeFlow free;
    auto sp = [&](const std::string& a, const std::string& b) {
      return km_of(*shortest_path(g, a, b, sc.day_start, free));
    };
    for (const auto& o : sc.orders) {
      const bool east = g.node(o.pickup).country == "A";
      const std::string from = east ? "exA" : "exB", to = east ? "exB" : "exA";
      const double direct = sp(o.pickup, "bc") + sp("bc", o.delivery);
      const double chain = sp(o.pickup, from) + sp(from, to) + sp(to, o.delivery);
      if (o.id[0] == 'n') {
        EXPECT_LT(direct, chain) << seed << " " << o.id;
      } else {
        EXPECT_LT(chain, direct) << seed << " " << o.id;
      }
    }
  }
}

TEST(GenerateXb, ReactiveDrivesLessThanStatic) {
  const Scenario sc = generate_xb_scenario(1, {});
  const KpiReport s = run(sc, Policy::static_plan).report;
  const KpiReport r = run(sc, Policy::reactive).report;
  EXPECT_LT(r.total_distance_km, s.total_distance_km);
  EXPECT_EQ(r.delivered, sc.orders.size());
  EXPECT_EQ(s.delivered, sc.orders.size());
}

// Invariants over noisy runs with events, breakdowns and late demand.
TEST(SimProperty, ConservationOrderingAndFeasibility) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    XbParams params;
    params.miss_probability = 0.3;
    params.demand_rate_per_hour = 1.5;
    Scenario sc = generate_xb_scenario(seed, params);
    TrafficEvent jam;
    jam.id = "jam";
    jam.kind = EventKind::congestion;
    jam.scope = std::vector<std::string>{"hA-bc", "bc-hA"};
    jam.severity = 0.6;
    jam.effect = SpeedMultiplier{0.3};
    jam.valid_from = 9.5 * 3600.0;
    jam.valid_to = 11 * 3600.0;
    sc.events.push_back(jam);
    sc.breakdowns.push_back({"vA1", 9 * 3600.0});
    for (const Policy p : kPolicies) {
      const SimResult r = run(sc, p);
      const std::string tag = std::to_string(seed) + " " + to_string(p);
      for (std::size_t i = 1; i < r.trace.size(); ++i) {
        ASSERT_LE(r.trace[i - 1].t, r.trace[i].t) << tag;
        ASSERT_LT(r.trace[i - 1].seq, r.trace[i].seq) << tag;
      }
      std::multiset<std::string> announced, closed;
      std::size_t delivered = 0;
      for (const auto& e : r.trace) {
        if (e.kind == "order_announced") announced.insert(e.payload.at("order").get<std::string>());
        if (e.kind == "order_closed") {
          closed.insert(e.payload.at("order").get<std::string>());
          if (e.payload.at("outcome") == "delivered") ++delivered;
        }
      }
      EXPECT_EQ(announced, closed) << tag;
      EXPECT_EQ(std::set<std::string>(closed.begin(), closed.end()).size(), closed.size()) << tag;
      EXPECT_EQ(delivered, r.report.delivered) << tag;
      EXPECT_EQ(r.report.delivered + r.report.failed + r.report.unassigned_at_end, announced.size())
          << tag;
      EXPECT_GE(r.report.load_factor, 0.0);
      EXPECT_LE(r.report.load_factor, 1.0);
      EXPECT_TRUE(r.plan_violations.empty()) << tag << ": " << r.plan_violations.front();
      EXPECT_EQ(r.worse_than_no_change, 0u) << tag;
      EXPECT_EQ(kpis(r.trace, sc.fleet, sc.knobs.weights), r.report) << tag;
    }
  }
}

}  // namespace
}  // namespace coglo
