#pragma once

// Solvers for the three problem families of parcel logistics (vehicle
// routing, packing, assignment), the multi-modal dispositioning/positioning
// pipeline and anticipation buffers.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>

#include "coglo/fleet.h"

namespace coglo {

/// Weighted-sum objective:
///   w_dist·km + w_time·route-hours + w_late·late-minutes
///   + w_vehicle·used-vehicles + w_unassigned·unserved-orders
struct ObjectiveWeights {
  double w_dist = 1.0;
  double w_time = 0.0;
  double w_late = 0.0;
  double w_vehicle = 0.0;
  double w_unassigned = 1e4;
};

nlohmann::json weights_to_json(const ObjectiveWeights& w);
ObjectiveWeights weights_from_json(const nlohmann::json& j);

/// Historical noise used to size anticipation buffers.
struct AnticipationStats {
  std::map<NodeKind, double> miss_probability;
  std::array<double, 24> hourly_demand_factor = [] {
    std::array<double, 24> a{};
    a.fill(1.0);
    return a;
  }();

  double miss(NodeKind kind) const {
    auto it = miss_probability.find(kind);
    return it == miss_probability.end() ? 0.0 : it->second;
  }
};

struct BufferPolicy {
  AnticipationStats stats;
  double alpha = 0.0;
};

/// Planning freeze for one vehicle's route. Stops [0, fixed) keep their ETAs
/// (visited, or the leg currently being driven); stops [fixed, committed)
/// keep their order but are re-timed. Everything after is free.
struct RouteLock {
  std::size_t fixed = 0;
  std::size_t committed = 1;
};

struct CvrpInstance {
  std::shared_ptr<TravelModel> travel;  // speed snapshot at t0
  Fleet vehicles;                       // broken and fixed-route vehicles are kept verbatim
  OrderBook orders;
  Seconds t0 = 0.0;
  double service_time_s = kDefaultServiceTimeS;
  BufferPolicy buffers;
  std::map<std::string, RouteLock> locks;

  const RoadGraph& graph() const { return travel->graph(); }
};

/// Throws Error{validation} unless every weight is non-negative and
/// w_unassigned exceeds the cost of serving one order across the instance
/// diameter (depot → pickup → delivery → depot).
void validate_weights(const ObjectiveWeights& weights, const CvrpInstance& instance);

/// Orders that sit on a route (active pickup, or parcels aboard) without an
/// active unloading stop. Terminal orders are excluded.
std::vector<std::string> unserved_orders(const Plan& plan, const OrderBook& orders);

/// Weighted-sum objective of a plan whose ETAs are populated. Unreachable
/// ETAs yield kUnreachable. Throws Error{validation} when an ETA is missing.
double objective(const Plan& plan, const ObjectiveWeights& weights, TravelModel& travel,
                 const OrderBook& orders);

/// Branch-and-bound optimum over all assignments and orderings; the oracle
/// for the heuristics. Guarded to ≤ 8 orders and ≤ 3 vehicles.
inline constexpr std::size_t kExactMaxOrders = 8;
inline constexpr std::size_t kExactMaxVehicles = 3;
Plan cvrp_exact(const CvrpInstance& instance, const ObjectiveWeights& weights);

/// Regret-2 insertion from empty routes. Orders without a feasible position
/// end up unassigned. Deterministic given seed.
Plan cvrp_construct(const CvrpInstance& instance, const ObjectiveWeights& weights,
                    std::uint64_t seed);

/// Regret-2 insertion of `base.unassigned` into the free suffixes of `base`.
Plan cvrp_construct(const Plan& base, const CvrpInstance& instance,
                    const ObjectiveWeights& weights, std::uint64_t seed);

struct ImproveBudget {
  std::size_t max_iterations = 1000;
  double max_seconds = 30.0;
};

/// Best-improvement local search over {relocate pair, swap pairs across
/// routes, intra-route 2-opt, reinsert unassigned}. Never returns a worse
/// or infeasible plan. `only_vehicles` restricts moves to those routes.
/// Throws Error{validation} on a hard-infeasible input.
Plan cvrp_improve(const Plan& plan, const CvrpInstance& instance,
                  const ObjectiveWeights& weights, const ImproveBudget& budget,
                  const std::set<std::string>* only_vehicles = nullptr);

struct Insertion {
  Plan plan;
  double delta = 0.0;
  std::string vehicle;
  std::size_t pickup_position = 0;    // stop index in the new route
  std::size_t delivery_position = 0;  // stop index in the new route
};

/// Cheapest feasible insertion of a new order over every vehicle and every
/// (pickup, delivery) position pair in the uncommitted suffixes. Existing
/// stop order is preserved. nullopt when no position is feasible.
std::optional<Insertion> insert_order(const Plan& plan, const Order& order,
                                      const CvrpInstance& instance,
                                      const ObjectiveWeights& weights);

/// First-fit decreasing. Throws Error{validation} when an item exceeds the
/// capacity.
std::vector<std::vector<std::size_t>> pack_ffd(std::span<const int> sizes, int capacity);

struct AssignmentResult {
  std::vector<std::optional<std::size_t>> row_to_col;  // nullopt: unmatched
  double total_cost = 0.0;
};

/// Minimum-cost perfect matching on the matrix padded to square with
/// 1 + sum of entries; padded matches are reported unmatched.
AssignmentResult assign_min_cost(const std::vector<std::vector<double>>& cost);

struct LinehaulLeg {
  std::string id;
  std::string from_office;
  std::string to_office;
  double cost = 0.0;
};

struct TransportUnit {
  std::string origin_office;
  std::string destination_office;
  std::vector<std::string> orders;
  int load = 0;
};

struct MultimodalResult {
  Plan disposition;
  std::vector<TransportUnit> units;
  std::vector<std::optional<std::string>> unit_leg;  // parallel to units
  std::vector<std::size_t> unassigned_units;
  double linehaul_cost = 0.0;
  std::vector<std::optional<Path>> positioning_routes;  // parallel to units
};

/// Dispositioning (collect parcels into the origin office of exchange),
/// positioning (pack parcels per destination office into transport units)
/// and line-haul assignment of units to legs.
MultimodalResult multimodal_plan(std::span<const Order> orders, const CvrpInstance& fleet,
                                 std::span<const LinehaulLeg> legs, int unit_capacity,
                                 const ObjectiveWeights& weights, std::uint64_t seed = 0);

/// slack = alpha × miss_probability(node kind) × service time at every free
/// pickup/delivery stop, then ETAs are recomputed. alpha = 0 is identity.
Plan apply_buffers(Plan plan, const AnticipationStats& stats, double alpha,
                   const CvrpInstance& instance, const ObjectiveWeights& weights);

/// ETAs and objective for every route of `plan` under the instance snapshot,
/// honouring the instance locks.
void retime(Plan& plan, const CvrpInstance& instance, const ObjectiveWeights& weights);

}  // namespace coglo
