#include "coglo/optimization.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "solver.h"

namespace coglo {

namespace {

bool terminal(OrderState s) { return s == OrderState::delivered || s == OrderState::failed; }

std::set<int> slots_for(const detail::Solver& solver, const std::set<std::string>& vehicles) {
  std::set<int> out;
  for (const auto& v : vehicles) {
    if (auto s = solver.slot_of(v)) out.insert(*s);
  }
  return out;
}

}  // namespace

nlohmann::json weights_to_json(const ObjectiveWeights& w) {
  return {{"w_dist", w.w_dist},
          {"w_time", w.w_time},
          {"w_late", w.w_late},
          {"w_vehicle", w.w_vehicle},
          {"w_unassigned", w.w_unassigned}};
}

ObjectiveWeights weights_from_json(const nlohmann::json& j) {
  ObjectiveWeights w;
  w.w_dist = j.value("w_dist", w.w_dist);
  w.w_time = j.value("w_time", w.w_time);
  w.w_late = j.value("w_late", w.w_late);
  w.w_vehicle = j.value("w_vehicle", w.w_vehicle);
  w.w_unassigned = j.value("w_unassigned", w.w_unassigned);
  return w;
}

void validate_weights(const ObjectiveWeights& w, const CvrpInstance& instance) {
  for (const double v : {w.w_dist, w.w_time, w.w_late, w.w_vehicle, w.w_unassigned}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::validation, "objective weights must be finite and non-negative");
    }
  }
  std::set<std::string> nodes;
  for (const auto& [id, v] : instance.vehicles) nodes.insert(v.home_depot);
  for (const auto& [id, o] : instance.orders) {
    nodes.insert(o.pickup);
    nodes.insert(o.delivery);
  }
  double diam_km = 0.0;
  double diam_h = 0.0;
  for (const auto& a : nodes) {
    for (const auto& b : nodes) {
      const auto leg = instance.travel->leg(a, b);
      if (!std::isfinite(leg.time_s)) continue;
      diam_km = std::max(diam_km, leg.distance_m / 1000.0);
      diam_h = std::max(diam_h, leg.time_s / 3600.0);
    }
  }
  const double plausible = 3.0 * (w.w_dist * diam_km + w.w_time * diam_h) + w.w_vehicle;
  if (!(w.w_unassigned > plausible)) {
    throw Error(ErrorCode::validation,
                "w_unassigned must exceed the routing cost of one order across the instance (" +
                    std::to_string(plausible) + ")",
                std::to_string(plausible));
  }
}

std::vector<std::string> unserved_orders(const Plan& plan, const OrderBook& orders) {
  std::set<std::string> out;
  for (const auto& route : plan.routes) {
    std::set<std::string> picked, unloaded;
    for (const auto& s : route.stops) {
      if (s.voided) continue;
      for (const auto& id : s.orders) {
        if (s.action == StopAction::pickup) picked.insert(id);
        if (s.unloads()) unloaded.insert(id);
      }
    }
    for (const auto& id : picked) {
      if (unloaded.count(id)) continue;
      auto it = orders.find(id);
      if (it != orders.end() && terminal(it->second.state)) continue;
      out.insert(id);
    }
  }
  return {out.begin(), out.end()};
}

double objective(const Plan& plan, const ObjectiveWeights& w, TravelModel& travel,
                 const OrderBook& orders) {
  double total = 0.0;
  bool unreachable = false;
  for (const auto& route : plan.routes) {
    const auto& stops = route.stops;
    if (stops.empty()) continue;
    for (std::size_t i = 0; i < stops.size(); ++i) {
      if (!stops[i].eta) {
        throw Error(ErrorCode::validation,
                    "route of '" + route.vehicle + "' lacks an ETA at stop " + std::to_string(i),
                    route.vehicle);
      }
      if (is_unreachable(*stops[i].eta)) unreachable = true;
    }
    if (unreachable) continue;
    double km = 0.0;
    double late = 0.0;
    bool used = false;
    for (std::size_t i = 0; i < stops.size(); ++i) {
      const Stop& s = stops[i];
      if (i > 0) km += travel.leg(stops[i - 1].node, s.node).distance_m / 1000.0;
      if (s.is_order_stop()) used = true;
      if (s.voided || !s.unloads()) continue;
      for (const auto& id : s.orders) {
        auto it = orders.find(id);
        if (it != orders.end()) late += std::max(0.0, (*s.eta - it->second.due()) / 60.0);
      }
    }
    const double hours = (*stops.back().eta - *stops.front().eta) / 3600.0;
    total += w.w_dist * km + w.w_time * hours + w.w_late * late + (used ? w.w_vehicle : 0.0);
  }
  if (unreachable || !std::isfinite(total)) return kUnreachable;
  const std::size_t unserved = plan.unassigned.size() + unserved_orders(plan, orders).size();
  return total + w.w_unassigned * static_cast<double>(unserved);
}

Plan cvrp_exact(const CvrpInstance& instance, const ObjectiveWeights& weights) {
  std::size_t vehicles = 0;
  for (const auto& [id, v] : instance.vehicles) {
    if (v.status != VehicleStatus::broken && !v.fixed_route) ++vehicles;
  }
  if (instance.orders.size() > kExactMaxOrders || vehicles > kExactMaxVehicles) {
    throw Error(ErrorCode::size_guard,
                "exact solver limited to " + std::to_string(kExactMaxOrders) + " orders and " +
                    std::to_string(kExactMaxVehicles) + " vehicles",
                std::to_string(instance.orders.size()) + "x" + std::to_string(vehicles));
  }
  Plan base;
  for (const auto& [id, o] : instance.orders) {
    if (!terminal(o.state)) base.unassigned.push_back(id);
  }
  detail::Solver solver(instance, weights, base);
  solver.solve_exact();
  return solver.materialize();
}

Plan cvrp_construct(const CvrpInstance& instance, const ObjectiveWeights& weights,
                    std::uint64_t seed) {
  Plan base;
  for (const auto& [id, o] : instance.orders) {
    if (!terminal(o.state)) base.unassigned.push_back(id);
  }
  return cvrp_construct(base, instance, weights, seed);
}

Plan cvrp_construct(const Plan& base, const CvrpInstance& instance,
                    const ObjectiveWeights& weights, std::uint64_t seed) {
  detail::Solver solver(instance, weights, base);
  solver.construct(seed);
  return solver.materialize();
}

Plan cvrp_improve(const Plan& plan, const CvrpInstance& instance,
                  const ObjectiveWeights& weights, const ImproveBudget& budget,
                  const std::set<std::string>* only_vehicles) {
  if (budget.max_iterations == 0) return plan;
  const auto report = validate_plan(plan, instance.graph(), instance.vehicles, instance.orders);
  if (!report.feasible()) {
    throw Error(ErrorCode::validation,
                "cvrp_improve needs a hard-feasible plan: " + report.violations.front().message,
                report.violations.front().vehicle);
  }
  detail::Solver solver(instance, weights, plan);
  if (!solver.feasible()) {
    throw Error(ErrorCode::validation, "cvrp_improve needs a hard-feasible plan");
  }
  const Plan start = solver.materialize();
  std::set<int> allowed;
  if (only_vehicles) allowed = slots_for(solver, *only_vehicles);
  if (solver.improve(budget, only_vehicles ? &allowed : nullptr) == 0) return start;
  Plan out = solver.materialize();
  return out.objective <= start.objective ? out : start;
}

std::optional<Insertion> insert_order(const Plan& plan, const Order& order,
                                      const CvrpInstance& instance,
                                      const ObjectiveWeights& weights) {
  for (const auto& route : plan.routes) {
    for (const auto& s : route.stops) {
      if (std::find(s.orders.begin(), s.orders.end(), order.id) != s.orders.end()) {
        throw Error(ErrorCode::validation, "order '" + order.id + "' is already planned", order.id);
      }
    }
  }
  Plan base = plan;
  std::erase(base.unassigned, order.id);
  detail::Solver solver(instance, weights, base, {order});
  const int job = *solver.job_of(order.id);

  Plan before = solver.materialize();
  std::erase(before.unassigned, order.id);
  before.objective = objective(before, weights, solver.travel(), solver.orders());

  int best_slot = -1;
  detail::InsertionChoice best;
  for (std::size_t s = 0; s < solver.slots().size(); ++s) {
    const auto choice = solver.best_insertion(job, static_cast<int>(s));
    if (choice.found() && (best_slot < 0 || choice.delta < best.delta)) {
      best = choice;
      best_slot = static_cast<int>(s);
    }
  }
  if (best_slot < 0) return std::nullopt;
  const std::size_t offset = solver.slots()[best_slot].prefix.size();
  const std::string vehicle = solver.slots()[best_slot].vehicle->id;
  solver.insert(job, best_slot, best);
  Insertion out;
  out.plan = solver.materialize();
  out.delta = out.plan.objective - before.objective;
  out.vehicle = vehicle;
  out.pickup_position = offset + best.pickup_at;
  out.delivery_position = offset + best.delivery_at;
  return out;
}

std::vector<std::vector<std::size_t>> pack_ffd(std::span<const int> sizes, int capacity) {
  if (capacity <= 0) throw Error(ErrorCode::validation, "bin capacity must be positive");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] <= 0 || sizes[i] > capacity) {
      throw Error(ErrorCode::validation,
                  "item " + std::to_string(i) + " of size " + std::to_string(sizes[i]) +
                      " does not fit capacity " + std::to_string(capacity),
                  std::to_string(i));
    }
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<std::vector<std::size_t>> bins;
  std::vector<int> room;
  for (const auto i : order) {
    std::size_t b = 0;
    while (b < bins.size() && room[b] < sizes[i]) ++b;
    if (b == bins.size()) {
      bins.emplace_back();
      room.push_back(capacity);
    }
    bins[b].push_back(i);
    room[b] -= sizes[i];
  }
  return bins;
}

AssignmentResult assign_min_cost(const std::vector<std::vector<double>>& cost) {
  if (cost.empty() || cost.front().empty()) {
    throw Error(ErrorCode::validation, "assignment matrix is empty");
  }
  const std::size_t rows = cost.size();
  const std::size_t cols = cost.front().size();
  double sum = 0.0;
  for (const auto& row : cost) {
    if (row.size() != cols) throw Error(ErrorCode::validation, "assignment matrix is ragged");
    for (const double c : row) {
      if (!std::isfinite(c)) throw Error(ErrorCode::validation, "assignment costs must be finite");
      sum += std::abs(c);
    }
  }
  const std::size_t n = std::max(rows, cols);
  const double pad = 1.0 + sum;
  auto at = [&](std::size_t i, std::size_t j) {
    return i < rows && j < cols ? cost[i][j] : pad;
  };

  // Shortest augmenting paths with potentials; 1-based, column 0 is a sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult result;
  result.row_to_col.assign(rows, std::nullopt);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j] - 1;
    if (i < rows && j - 1 < cols) {
      result.row_to_col[i] = j - 1;
      result.total_cost += cost[i][j - 1];
    }
  }
  return result;
}

MultimodalResult multimodal_plan(std::span<const Order> orders, const CvrpInstance& fleet,
                                 std::span<const LinehaulLeg> legs, int unit_capacity,
                                 const ObjectiveWeights& weights, std::uint64_t seed) {
  const RoadGraph& graph = fleet.graph();
  TravelModel& travel = *fleet.travel;
  std::vector<std::string> offices;
  for (const auto& n : graph.nodes()) {
    if (n.kind == NodeKind::exchange_office) offices.push_back(n.id);
  }

  // Nearest office in the node's country, by travel time in the given direction.
  auto nearest = [&](const std::string& node, bool towards) -> std::optional<std::string> {
    const std::string& country = graph.node(node).country;
    std::optional<std::string> best;
    double best_t = kUnreachable;
    for (const auto& office : offices) {
      if (graph.node(office).country != country) continue;
      const double t = towards ? travel.leg(node, office).time_s : travel.leg(office, node).time_s;
      if (t < best_t || (!best && std::isfinite(t))) {
        best_t = t;
        best = office;
      }
    }
    return best;
  };

  CvrpInstance stage1 = fleet;
  stage1.orders.clear();
  std::map<std::pair<std::string, std::string>, std::vector<const Order*>> groups;
  for (const auto& o : orders) {
    const auto destination = nearest(o.delivery, false);
    if (!destination) {
      throw Error(ErrorCode::validation,
                  "order '" + o.id + "' has no exchange office in its destination country", o.id);
    }
    const auto origin = nearest(o.pickup, true);
    if (!origin) {
      throw Error(ErrorCode::validation,
                  "order '" + o.id + "' has no exchange office in its origin country", o.id);
    }
    Order collect = o;
    collect.delivery = *origin;
    stage1.orders[collect.id] = collect;
    groups[{*origin, *destination}].push_back(&o);
  }

  MultimodalResult result;
  Plan disposition = cvrp_construct(stage1, weights, seed);
  result.disposition = cvrp_improve(disposition, stage1, weights, ImproveBudget{});

  for (const auto& [key, members] : groups) {
    std::vector<int> sizes;
    for (const Order* o : members) sizes.push_back(o->size_units);
    for (const auto& bin : pack_ffd(sizes, unit_capacity)) {
      TransportUnit unit{key.first, key.second, {}, 0};
      for (const auto i : bin) {
        unit.orders.push_back(members[i]->id);
        unit.load += members[i]->size_units;
      }
      result.units.push_back(std::move(unit));
    }
  }

  result.unit_leg.assign(result.units.size(), std::nullopt);
  result.positioning_routes.assign(result.units.size(), std::nullopt);
  if (result.units.empty()) return result;
  if (legs.empty()) {
    for (std::size_t u = 0; u < result.units.size(); ++u) result.unassigned_units.push_back(u);
    return result;
  }

  double compatible_sum = 0.0;
  for (const auto& leg : legs) compatible_sum += std::abs(leg.cost);
  const double incompatible = 1.0 + compatible_sum;
  auto fits = [](const TransportUnit& u, const LinehaulLeg& l) {
    return l.from_office == u.origin_office && l.to_office == u.destination_office;
  };
  std::vector<std::vector<double>> matrix(result.units.size(),
                                          std::vector<double>(legs.size(), incompatible));
  for (std::size_t u = 0; u < result.units.size(); ++u) {
    for (std::size_t l = 0; l < legs.size(); ++l) {
      if (fits(result.units[u], legs[l])) matrix[u][l] = legs[l].cost;
    }
  }
  const auto assignment = assign_min_cost(matrix);
  for (std::size_t u = 0; u < result.units.size(); ++u) {
    const auto col = assignment.row_to_col[u];
    if (!col || !fits(result.units[u], legs[*col])) {
      result.unassigned_units.push_back(u);
      continue;
    }
    result.unit_leg[u] = legs[*col].id;
    result.linehaul_cost += legs[*col].cost;
    result.positioning_routes[u] = travel.path(legs[*col].from_office, legs[*col].to_office);
  }
  return result;
}

void retime(Plan& plan, const CvrpInstance& instance, const ObjectiveWeights& weights) {
  for (auto& route : plan.routes) {
    auto vit = instance.vehicles.find(route.vehicle);
    if (vit == instance.vehicles.end()) continue;
    RouteLock lock;
    if (auto it = instance.locks.find(route.vehicle); it != instance.locks.end()) {
      lock = it->second;
    }
    compute_etas(route, vit->second, *instance.travel, instance.t0, &instance.orders, lock.fixed);
  }
  plan.objective = objective(plan, weights, *instance.travel, instance.orders);
}

Plan apply_buffers(Plan plan, const AnticipationStats& stats, double alpha,
                   const CvrpInstance& instance, const ObjectiveWeights& weights) {
  if (alpha == 0.0) return plan;
  if (alpha < 0.0) throw Error(ErrorCode::validation, "buffer scaling must be non-negative");
  const RoadGraph& graph = instance.graph();
  for (auto& route : plan.routes) {
    std::size_t fixed = 0;
    if (auto it = instance.locks.find(route.vehicle); it != instance.locks.end()) {
      fixed = it->second.fixed;
    }
    for (std::size_t i = fixed; i < route.stops.size(); ++i) {
      Stop& s = route.stops[i];
      if (!s.is_order_stop() || s.voided) continue;
      s.slack_s = alpha * stats.miss(graph.node(s.node).kind) * s.service_time_s;
    }
  }
  retime(plan, instance, weights);
  return plan;
}

}  // namespace coglo
