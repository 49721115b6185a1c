#pragma once

// Small graph/fleet/order builders shared by the unit and acceptance suites.

#include <memory>
#include <string>

#include "coglo/optimization.h"
#include "coglo/traffic.h"

namespace coglo::testing {

inline constexpr double kKmPerDegree = 111.32;

class GraphBuilder {
 public:
  GraphBuilder& node(const std::string& id, double x_km = 0.0, double y_km = 0.0,
                     NodeKind kind = NodeKind::junction, const std::string& country = "") {
    doc_["nodes"].push_back({{"id", id},
                             {"lat", y_km / kKmPerDegree},
                             {"lon", x_km / kKmPerDegree},
                             {"kind", to_string(kind)},
                             {"country", country}});
    return *this;
  }
  GraphBuilder& edge(const std::string& id, const std::string& from, const std::string& to,
                     double length_m, double speed_kmh) {
    doc_["edges"].push_back({{"id", id},
                             {"from", from},
                             {"to", to},
                             {"length_m", length_m},
                             {"free_flow_speed_kmh", speed_kmh}});
    return *this;
  }
  // Two directed edges "a-b" and "b-a".
  GraphBuilder& road(const std::string& a, const std::string& b, double length_m,
                     double speed_kmh) {
    edge(a + "-" + b, a, b, length_m, speed_kmh);
    return edge(b + "-" + a, b, a, length_m, speed_kmh);
  }
  const nlohmann::json& json() const { return doc_; }
  RoadGraph build() const { return build_graph(doc_); }

 private:
  nlohmann::json doc_ = {{"nodes", nlohmann::json::array()},
                         {"edges", nlohmann::json::array()}};
};

// A(0)–B–C with A→B 10 s, B→C 15 s and a direct A→C of 30 s (all 36 km/h).
inline RoadGraph demo_graph() {
  return GraphBuilder()
      .node("A", 0.0)
      .node("B", 0.1)
      .node("C", 0.25)
      .edge("A-B", "A", "B", 100.0, 36.0)
      .edge("B-C", "B", "C", 150.0, 36.0)
      .edge("A-C", "A", "C", 300.0, 36.0)
      .build();
}

// Depot "d" at km 0 and customers "k1".."kn" at km 1..n on a two-way line,
// 1 km per segment at 36 km/h (100 s).
inline RoadGraph line_graph(int n) {
  GraphBuilder b;
  b.node("d", 0.0, 0.0, NodeKind::depot);
  std::string prev = "d";
  for (int i = 1; i <= n; ++i) {
    const std::string id = "k" + std::to_string(i);
    b.node(id, i, 0.0, NodeKind::customer);
    b.road(prev, id, 1000.0, 36.0);
    prev = id;
  }
  return b.build();
}

inline Vehicle make_vehicle(const std::string& id, int capacity, const std::string& depot,
                            Seconds shift_start = 0.0, Seconds shift_end = 86400.0) {
  Vehicle v;
  v.id = id;
  v.capacity_units = capacity;
  v.home_depot = depot;
  v.shift_start = shift_start;
  v.shift_end = shift_end;
  v.cost_per_km = 1.0;
  v.fuel_base_l_per_km = 0.1;
  v.fuel_load_coeff_l_per_km = 0.01;
  return v;
}

inline Order make_order(const std::string& id, const std::string& pickup,
                        const std::string& delivery, int size = 1, Seconds sla = 1e9) {
  Order o;
  o.id = id;
  o.size_units = size;
  o.pickup = pickup;
  o.delivery = delivery;
  o.sla_deadline = sla;
  return o;
}

// Owns the graph so the instance's travel model stays valid.
struct World {
  std::shared_ptr<RoadGraph> graph;
  CvrpInstance instance;

  World(RoadGraph g, std::vector<Vehicle> vehicles, std::vector<Order> orders, Seconds t0 = 0.0)
      : graph(std::make_shared<RoadGraph>(std::move(g))) {
    instance.travel = std::make_shared<TravelModel>(*graph, FreeFlow{}, t0);
    instance.t0 = t0;
    instance.service_time_s = 0.0;
    for (auto& v : vehicles) instance.vehicles[v.id] = v;
    for (auto& o : orders) instance.orders[o.id] = o;
  }
};

inline ObjectiveWeights distance_only(double w_unassigned = 1e4) {
  ObjectiveWeights w;
  w.w_dist = 1.0;
  w.w_time = 0.0;
  w.w_late = 0.0;
  w.w_vehicle = 0.0;
  w.w_unassigned = w_unassigned;
  return w;
}

}  // namespace coglo::testing
