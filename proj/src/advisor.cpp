#include "coglo/advisor.h"

#include <algorithm>
#include <set>

#include "solver.h"

namespace coglo {

namespace {

using nlohmann::json;

bool terminal(OrderState s) { return s == OrderState::delivered || s == OrderState::failed; }

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Same stop sequence, ETAs aside.
bool same_stop(const Stop& a, const Stop& b) {
  return a.node == b.node && a.action == b.action && a.orders == b.orders &&
         a.voided == b.voided && a.slack_s == b.slack_s && a.service_time_s == b.service_time_s;
}

bool same_structure(const Route& a, const Route& b) {
  return a.stops.size() == b.stops.size() &&
         std::equal(a.stops.begin(), a.stops.end(), b.stops.begin(), same_stop);
}

std::vector<std::string> minus(const std::vector<std::string>& a,
                               const std::vector<std::string>& b) {
  std::set<std::string> drop(b.begin(), b.end());
  std::set<std::string> out;
  for (const auto& x : a) {
    if (!drop.count(x)) out.insert(x);
  }
  return {out.begin(), out.end()};
}

// Orders with at least one stop that still moves them.
std::set<std::string> routed_orders(const Plan& plan) {
  std::set<std::string> out;
  for (const auto& r : plan.routes) {
    for (const auto& s : r.stops) {
      if (s.voided || !s.is_order_stop()) continue;
      out.insert(s.orders.begin(), s.orders.end());
    }
  }
  return out;
}

// Every open order sits on exactly one route or in the unassigned list.
bool conserved(const Plan& plan, const OrderBook& orders) {
  std::map<std::string, int> seen;
  for (const auto& r : plan.routes) {
    std::set<std::string> here;
    for (const auto& s : r.stops) {
      if (s.voided || !s.is_order_stop()) continue;
      here.insert(s.orders.begin(), s.orders.end());
    }
    for (const auto& id : here) ++seen[id];
  }
  for (const auto& id : plan.unassigned) ++seen[id];
  for (const auto& [id, o] : orders) {
    if (terminal(o.state)) continue;
    if (seen[id] != 1) return false;
  }
  return true;
}

void to_state(Order& o, OrderState target) {
  if (o.state == target) return;
  o = transition(std::move(o), target);
}

struct Candidate {
  Plan plan;
  double cost = kUnreachable;
  Scope scope = Scope::local;
  std::vector<std::string> failed;
};

}  // namespace

const char* to_string(AdhocKind kind) {
  switch (kind) {
    case AdhocKind::new_order: return "new_order";
    case AdhocKind::vehicle_breakdown: return "vehicle_breakdown";
    case AdhocKind::traffic: return "traffic";
    case AdhocKind::missed_delivery: return "missed_delivery";
    case AdhocKind::manual: return "manual";
  }
  return "manual";
}

const char* to_string(Scope scope) { return scope == Scope::local ? "local" : "global"; }

const char* to_string(RecStatus status) {
  switch (status) {
    case RecStatus::proposed: return "proposed";
    case RecStatus::accepted: return "accepted";
    case RecStatus::rejected: return "rejected";
    case RecStatus::expired: return "expired";
  }
  return "proposed";
}

RecStatus rec_status_from_string(std::string_view s) {
  if (s == "proposed") return RecStatus::proposed;
  if (s == "accepted") return RecStatus::accepted;
  if (s == "rejected") return RecStatus::rejected;
  if (s == "expired") return RecStatus::expired;
  throw Error(ErrorCode::validation, "unknown recommendation status '" + std::string(s) + "'",
              std::string(s));
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "accept") return Verdict::accept;
  if (s == "reject") return Verdict::reject;
  throw Error(ErrorCode::validation, "verdict must be accept or reject", std::string(s));
}

const char* to_string(XbMode mode) {
  return mode == XbMode::direct_border ? "direct_border" : "via_exchange";
}

json adhoc_to_json(const AdhocEvent& e) {
  json j = {{"type", to_string(e.kind)}};
  switch (e.kind) {
    case AdhocKind::new_order:
      if (e.order) j["order"] = order_to_json(*e.order);
      break;
    case AdhocKind::vehicle_breakdown: j["vehicle"] = e.vehicle; break;
    case AdhocKind::missed_delivery: j["order"] = e.order_id; break;
    case AdhocKind::traffic:
    case AdhocKind::manual:
      if (e.traffic) j["event"] = event_to_json(*e.traffic);
      break;
  }
  if (e.at) j["at"] = *e.at;
  if (e.sequence) j["sequence"] = e.sequence;
  return j;
}

AdhocEvent adhoc_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw Error(ErrorCode::validation, "event needs a string 'type'");
  }
  AdhocEvent e;
  const auto type = j.at("type").get<std::string>();
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) {
      throw Error(ErrorCode::validation, type + " event needs '" + key + "'", key);
    }
    return j.at(key);
  };
  try {
    if (type == "new_order") {
      e.kind = AdhocKind::new_order;
      e.order = order_from_json(need("order"));
    } else if (type == "vehicle_breakdown") {
      e.kind = AdhocKind::vehicle_breakdown;
      e.vehicle = need("vehicle").get<std::string>();
    } else if (type == "missed_delivery") {
      e.kind = AdhocKind::missed_delivery;
      e.order_id = need("order").get<std::string>();
    } else if (type == "traffic" || type == "manual") {
      e.kind = type == "traffic" ? AdhocKind::traffic : AdhocKind::manual;
      e.traffic = event_from_json(need("event"));
      if (e.kind == AdhocKind::manual) e.traffic->source = EventSource::manual;
    } else {
      throw Error(ErrorCode::validation, "unknown event type '" + type + "'", type);
    }
    if (j.contains("at") && !j.at("at").is_null()) e.at = j.at("at").get<double>();
    if (j.contains("sequence")) e.sequence = j.at("sequence").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("event: ") + ex.what(), type);
  }
  return e;
}

json state_to_json(const WorldState& s) {
  json fleet = json::array();
  for (const auto& [id, v] : s.fleet) fleet.push_back(vehicle_to_json(v));
  json orders = json::array();
  for (const auto& [id, o] : s.orders) orders.push_back(order_to_json(o));
  json events = json::array();
  for (const auto& e : s.events) events.push_back(event_to_json(e));
  json progress = json::object();
  for (const auto& [v, p] : s.progress) progress[v] = {{"fixed", p.fixed}, {"served", p.served}};
  return {{"clock", s.clock},
          {"version", s.version},
          {"graph", {{"nodes", s.graph ? s.graph->nodes().size() : 0},
                     {"edges", s.graph ? s.graph->edges().size() : 0}}},
          {"events", events},
          {"fleet", fleet},
          {"orders", orders},
          {"plan", plan_to_json(s.plan)},
          {"progress", progress},
          {"attempts", s.attempts}};
}

json config_to_json(const AdvisorConfig& c) {
  json miss = json::object();
  for (const auto& [kind, p] : c.stats.miss_probability) miss[to_string(kind)] = p;
  return {{"weights", weights_to_json(c.weights)},
          {"theta", c.theta},
          {"k", c.k},
          {"horizon_s", c.horizon_s},
          {"ttl_s", c.ttl_s},
          {"alpha", c.alpha},
          {"miss_probability", miss},
          {"hourly_demand_factor", c.stats.hourly_demand_factor},
          {"service_time_s", c.service_time_s},
          {"improve_iterations", c.budget.max_iterations},
          {"improve_seconds", c.budget.max_seconds},
          {"seed", c.seed},
          {"max_attempts", c.max_attempts}};
}

AdvisorConfig config_from_json(const json& j) {
  AdvisorConfig c;
  if (j.is_null()) return c;
  try {
    if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"));
    c.theta = j.value("theta", c.theta);
    c.k = j.value("k", c.k);
    c.horizon_s = j.value("horizon_s", c.horizon_s);
    c.ttl_s = j.value("ttl_s", c.ttl_s);
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("miss_probability")) {
      for (const auto& [kind, p] : j.at("miss_probability").items()) {
        c.stats.miss_probability[node_kind_from_string(kind)] = p.get<double>();
      }
    }
    if (j.contains("hourly_demand_factor")) {
      c.stats.hourly_demand_factor = j.at("hourly_demand_factor").get<std::array<double, 24>>();
    }
    c.service_time_s = j.value("service_time_s", c.service_time_s);
    c.budget.max_iterations = j.value("improve_iterations", c.budget.max_iterations);
    c.budget.max_seconds = j.value("improve_seconds", c.budget.max_seconds);
    c.seed = j.value("seed", c.seed);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("knobs: ") + ex.what());
  }
  if (c.theta < 0 || c.horizon_s < 0 || c.ttl_s < 0 || c.alpha < 0 || c.max_attempts < 1 ||
      c.service_time_s < 0) {
    throw Error(ErrorCode::validation, "knobs must be non-negative (max_attempts ≥ 1)");
  }
  return c;
}

json recommendation_to_json(const Recommendation& r) {
  json changes = json::array();
  for (const auto& c : r.changed_routes) {
    changes.push_back(
        {{"vehicle", c.vehicle}, {"before", route_to_json(c.before)}, {"after", route_to_json(c.after)}});
  }
  return {{"id", r.id},
          {"sequence", r.sequence},
          {"trigger", r.trigger ? adhoc_to_json(*r.trigger) : json(nullptr)},
          {"kind", r.trigger ? "event" : "periodic"},
          {"scope", to_string(r.scope)},
          {"no_change", r.no_change()},
          {"plan_delta",
           {{"changed_routes", changes},
            {"unassigned_added", r.unassigned_added},
            {"unassigned_removed", r.unassigned_removed},
            {"failed_orders", r.failed_orders}}},
          {"objective_before", num(r.objective_before)},
          {"objective_no_change", num(r.objective_no_change)},
          {"objective_after", num(r.objective_after)},
          {"status", to_string(r.status)},
          {"created_at", r.created_at},
          {"ttl_s", r.ttl_s},
          {"base_version", r.base_version},
          {"ephemeral", r.ephemeral},
          {"plan", plan_to_json(r.plan)}};
}

double path_cost(const Path& path, const ObjectiveWeights& w) {
  return w.w_dist * path.total_distance_m / 1000.0 + w.w_time * path.total_time_s / 3600.0;
}

// ---------------------------------------------------------------------------

Advisor::Advisor(WorldState initial, AdvisorConfig config)
    : state_(std::move(initial)), config_(std::move(config)) {
  if (!state_.graph) throw Error(ErrorCode::validation, "world state needs a graph");
  for (const auto& e : state_.events) validate_event(e);
  for (const auto& [id, o] : state_.orders) {
    state_.graph->node_index(o.pickup);
    state_.graph->node_index(o.delivery);
  }
  for (const auto& [id, v] : state_.fleet) state_.graph->node_index(v.home_depot);
}

const Recommendation& Advisor::recommendation(std::string_view id) const {
  for (const auto& r : recs_) {
    if (r.id == id) return r;
  }
  throw Error(ErrorCode::not_found, "unknown recommendation '" + std::string(id) + "'",
              std::string(id));
}

std::shared_ptr<TravelModel> Advisor::travel() const {
  EventContext ctx(*state_.graph, state_.events);
  auto times = snapshot_edge_times(*state_.graph, state_.clock, ctx);
  if (!travel_ || travel_->edge_times() != times) {
    travel_ = std::make_shared<TravelModel>(*state_.graph, std::move(times), state_.clock);
  }
  return travel_;
}

std::map<std::string, RouteLock> Advisor::locks() const {
  std::map<std::string, RouteLock> out;
  const Seconds horizon_end = state_.clock + config_.horizon_s;
  for (const auto& r : state_.plan.routes) {
    const auto& stops = r.stops;
    auto vit = state_.fleet.find(r.vehicle);
    if (vit != state_.fleet.end() && vit->second.status == VehicleStatus::broken) {
      out[r.vehicle] = {stops.size(), stops.size()};
      continue;
    }
    std::size_t fixed = 0;
    if (auto it = state_.progress.find(r.vehicle); it != state_.progress.end()) {
      fixed = it->second.fixed;
    }
    std::size_t committed = std::max<std::size_t>(fixed, 1);
    while (committed < stops.size() && stops[committed].action != StopAction::depot_end &&
           stops[committed].eta && *stops[committed].eta <= horizon_end) {
      ++committed;
    }
    out[r.vehicle] = {fixed, committed};
  }
  return out;
}

CvrpInstance Advisor::instance() const {
  CvrpInstance inst;
  inst.travel = travel();
  inst.vehicles = state_.fleet;
  inst.orders = state_.orders;
  inst.t0 = state_.clock;
  inst.service_time_s = config_.service_time_s;
  inst.buffers = {config_.stats, config_.alpha};
  inst.locks = locks();
  return inst;
}

Plan Advisor::retimed(Plan plan, const CvrpInstance& inst) const {
  retime(plan, inst, config_.weights);
  return plan;
}

double Advisor::priced(const Plan& plan, const CvrpInstance& inst) const {
  if (!std::isfinite(plan.objective)) return kUnreachable;
  if (!validate_plan(plan, *state_.graph, inst.vehicles, inst.orders).feasible()) {
    return kUnreachable;
  }
  return plan.objective;
}

void Advisor::sync_states() {
  const auto on_route = routed_orders(state_.plan);
  for (auto& [id, o] : state_.orders) {
    if (o.state == OrderState::announced && on_route.count(id)) to_state(o, OrderState::assigned);
    if (o.state == OrderState::assigned && !on_route.count(id)) to_state(o, OrderState::announced);
  }
}

void Advisor::install(Plan plan, const std::vector<std::string>& failed) {
  for (const auto& id : failed) {
    auto it = state_.orders.find(id);
    if (it != state_.orders.end()) to_state(it->second, OrderState::failed);
  }
  if (!failed.empty()) plan.unassigned = minus(plan.unassigned, failed);
  state_.plan = std::move(plan);
  const CvrpInstance inst = instance();
  retime(state_.plan, inst, config_.weights);
  sync_states();
  ++state_.version;
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> Advisor::apply(const json& command) {
  Outcome out = execute(command);
  log_.push_back(command);
  if (out.deferred) throw *out.deferred;
  return out.rec;
}

Advisor::Outcome Advisor::execute(const json& cmd) {
  if (!cmd.is_object() || !cmd.contains("op")) {
    throw Error(ErrorCode::validation, "command needs an 'op'");
  }
  const auto op = cmd.at("op").get<std::string>();
  try {
    if (op == "daily") return run_daily();
    if (op == "event") return run_event(adhoc_from_json(cmd.at("event")));
    if (op == "periodic") return run_periodic();
    if (op == "decide") {
      return run_decide(cmd.at("id").get<std::string>(),
                        verdict_from_string(cmd.at("verdict").get<std::string>()));
    }
    if (op == "clock") {
      run_clock(cmd.at("t").get<double>());
      return {};
    }
    if (op == "depart") {
      run_depart(cmd.at("vehicle").get<std::string>(), cmd.at("at").get<double>(),
                 cmd.at("arrival").get<double>());
      return {};
    }
    if (op == "serve") {
      run_serve(cmd.at("vehicle").get<std::string>(), cmd.at("at").get<double>(),
                cmd.value("missed", false));
      return {};
    }
    if (op == "fail") {
      run_fail(cmd.at("order").get<std::string>());
      return {};
    }
    if (op == "fixed_route") {
      Plan holder = plan_from_json({{"routes", json::array({cmd.at("route")})},
                                    {"unassigned", json::array()}});
      run_fixed_route(holder.routes.at(0));
      return {};
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, "command '" + op + "': " + ex.what(), op);
  }
  throw Error(ErrorCode::validation, "unknown command '" + op + "'", op);
}

const Plan& Advisor::daily_orchestration() {
  apply({{"op", "daily"}});
  return state_.plan;
}

const Recommendation& Advisor::handle_event(const AdhocEvent& event) {
  return recs_[*apply({{"op", "event"}, {"event", adhoc_to_json(event)}})];
}

const Recommendation& Advisor::periodic_reoptimize() {
  return recs_[*apply({{"op", "periodic"}})];
}

const Recommendation& Advisor::decide(std::string_view id, Verdict verdict) {
  return recs_[*apply({{"op", "decide"},
                       {"id", std::string(id)},
                       {"verdict", verdict == Verdict::accept ? "accept" : "reject"}})];
}

void Advisor::advance_clock(Seconds t) { apply({{"op", "clock"}, {"t", t}}); }

void Advisor::depart(std::string_view vehicle, Seconds at, Seconds arrival) {
  apply({{"op", "depart"}, {"vehicle", std::string(vehicle)}, {"at", at}, {"arrival", arrival}});
}

void Advisor::serve(std::string_view vehicle, Seconds at, bool missed) {
  apply({{"op", "serve"}, {"vehicle", std::string(vehicle)}, {"at", at}, {"missed", missed}});
}

void Advisor::fail_order(std::string_view order) {
  apply({{"op", "fail"}, {"order", std::string(order)}});
}

void Advisor::install_fixed_route(const Route& route) {
  apply({{"op", "fixed_route"}, {"route", route_to_json(route)}});
}

Advisor Advisor::replay(WorldState initial, AdvisorConfig config, const std::vector<json>& log) {
  Advisor a(std::move(initial), std::move(config));
  for (const auto& cmd : log) {
    try {
      a.execute(cmd);
    } catch (const Error&) {
      // Logged commands that failed originally fail identically here.
    }
    a.log_.push_back(cmd);
  }
  return a;
}

Recommendation Advisor::dry_run(const AdhocEvent& event) const {
  Advisor copy = *this;
  Recommendation rec = copy.handle_event(event);
  rec.ephemeral = true;
  return rec;
}

// ---------------------------------------------------------------------------

void Advisor::run_clock(Seconds t) {
  if (t < state_.clock) {
    throw Error(ErrorCode::validation, "clock cannot move backwards", std::to_string(t));
  }
  state_.clock = t;
}

void Advisor::run_fixed_route(const Route& route) {
  auto vit = state_.fleet.find(route.vehicle);
  if (vit == state_.fleet.end()) {
    throw Error(ErrorCode::not_found, "unknown vehicle '" + route.vehicle + "'", route.vehicle);
  }
  if (!vit->second.fixed_route) {
    throw Error(ErrorCode::validation, "vehicle '" + route.vehicle + "' is not fixed-route",
                route.vehicle);
  }
  std::set<std::string> ids;
  for (const auto& s : route.stops) {
    state_.graph->node_index(s.node);
    for (const auto& id : s.orders) {
      if (!state_.orders.count(id)) {
        throw Error(ErrorCode::not_found, "unknown order '" + id + "'", id);
      }
      ids.insert(id);
    }
  }
  Plan plan = state_.plan;
  if (Route* r = plan.route_of(route.vehicle)) {
    *r = route;
  } else {
    plan.routes.push_back(route);
  }
  plan.unassigned = minus(plan.unassigned, {ids.begin(), ids.end()});
  install(std::move(plan), {});
}

void Advisor::run_depart(const std::string& vehicle, Seconds at, Seconds arrival) {
  Route* r = state_.plan.route_of(vehicle);
  if (!r) throw Error(ErrorCode::not_found, "vehicle '" + vehicle + "' has no route", vehicle);
  auto& p = state_.progress[vehicle];
  if (p.served < p.fixed) {
    throw Error(ErrorCode::conflict, "vehicle '" + vehicle + "' is still en route", vehicle);
  }
  run_clock(std::max(at, state_.clock));
  if (p.fixed == 0) {
    r->stops[0].eta = at;
    p.fixed = p.served = 1;
  }
  if (p.fixed >= r->stops.size()) {
    throw Error(ErrorCode::conflict, "vehicle '" + vehicle + "' has finished its route", vehicle);
  }
  // Parcels aboard are now moving.
  for (std::size_t i = 0; i < p.fixed; ++i) {
    const Stop& s = r->stops[i];
    if (s.voided || s.action != StopAction::pickup) continue;
    for (const auto& id : s.orders) {
      Order& o = state_.orders.at(id);
      if (o.state == OrderState::picked_up) to_state(o, OrderState::in_transit);
    }
  }
  r->stops[p.fixed].eta = arrival;
  ++p.fixed;
  state_.fleet.at(vehicle).status = VehicleStatus::en_route;
  compute_etas(*r, state_.fleet.at(vehicle), *travel(), state_.clock, &state_.orders, p.fixed);
  ++state_.version;
}

void Advisor::run_serve(const std::string& vehicle, Seconds at, bool missed) {
  Route* r = state_.plan.route_of(vehicle);
  if (!r) throw Error(ErrorCode::not_found, "vehicle '" + vehicle + "' has no route", vehicle);
  auto& p = state_.progress[vehicle];
  if (p.served >= p.fixed) {
    throw Error(ErrorCode::conflict, "vehicle '" + vehicle + "' has not reached a stop", vehicle);
  }
  run_clock(std::max(at, state_.clock));
  Stop& s = r->stops[p.fixed - 1];
  s.eta = at;
  p.served = p.fixed;
  switch (s.action) {
    case StopAction::pickup:
      if (missed) {
        s.voided = true;
        break;
      }
      for (const auto& id : s.orders) {
        Order& o = state_.orders.at(id);
        if (o.state == OrderState::announced) to_state(o, OrderState::assigned);
        if (o.state == OrderState::assigned) to_state(o, OrderState::picked_up);
      }
      break;
    case StopAction::delivery:
    case StopAction::exchange_handover:
      if (missed) {
        s.voided = true;
        for (const auto& id : s.orders) ++state_.attempts[id];
        break;
      }
      for (const auto& id : s.orders) {
        Order& o = state_.orders.at(id);
        if (o.state == OrderState::picked_up) to_state(o, OrderState::in_transit);
        to_state(o, s.action == StopAction::delivery ? OrderState::delivered
                                                     : OrderState::at_exchange);
        ++state_.attempts[id];
      }
      break;
    case StopAction::depot_end:
      state_.fleet.at(vehicle).status = VehicleStatus::available;
      break;
    case StopAction::depot_start:
      break;
  }
  compute_etas(*r, state_.fleet.at(vehicle), *travel(), state_.clock, &state_.orders, p.fixed);
  ++state_.version;
}

void Advisor::run_fail(const std::string& id) {
  auto it = state_.orders.find(id);
  if (it == state_.orders.end()) {
    throw Error(ErrorCode::not_found, "unknown order '" + id + "'", id);
  }
  if (it->second.state == OrderState::picked_up) to_state(it->second, OrderState::in_transit);
  to_state(it->second, OrderState::failed);
  // Drop the order's remaining stops; visited ones stay for history.
  for (auto& r : state_.plan.routes) {
    std::size_t fixed = 0;
    if (auto pit = state_.progress.find(r.vehicle); pit != state_.progress.end()) {
      fixed = pit->second.fixed;
    }
    std::vector<Stop> kept(r.stops.begin(), r.stops.begin() + static_cast<std::ptrdiff_t>(fixed));
    for (std::size_t i = fixed; i < r.stops.size(); ++i) {
      Stop s = r.stops[i];
      if (s.is_order_stop()) {
        std::erase(s.orders, id);
        if (s.orders.empty()) continue;
      }
      kept.push_back(std::move(s));
    }
    r.stops = std::move(kept);
  }
  state_.plan.unassigned = minus(state_.plan.unassigned, {id});
  const CvrpInstance inst = instance();
  retime(state_.plan, inst, config_.weights);
  ++state_.version;
}

Advisor::Outcome Advisor::run_daily() {
  for (const auto& [v, p] : state_.progress) {
    const auto& vehicle = state_.fleet.at(v);
    if (p.fixed > 0 && !vehicle.fixed_route) {
      throw Error(ErrorCode::conflict, "vehicle '" + v + "' has already left its depot", v);
    }
  }
  Plan base;
  for (const auto& r : state_.plan.routes) {
    const auto& v = state_.fleet.at(r.vehicle);
    if (v.fixed_route || v.status == VehicleStatus::broken) base.routes.push_back(r);
  }
  const auto kept = routed_orders(base);
  for (const auto& [id, o] : state_.orders) {
    if (!terminal(o.state) && !kept.count(id)) base.unassigned.push_back(id);
  }
  const CvrpInstance inst = instance();
  detail::Solver solver(inst, config_.weights, base);
  solver.construct(config_.seed);
  solver.improve(config_.budget);
  Plan plan = apply_buffers(solver.materialize(), config_.stats, config_.alpha, inst,
                            config_.weights);
  const auto report = validate_plan(plan, *state_.graph, inst.vehicles, inst.orders);
  if (!report.feasible()) {
    throw Error(ErrorCode::internal, "daily plan violates " +
                                         std::string(to_string(report.violations[0].kind)));
  }
  install(std::move(plan), {});
  return {};
}

void Advisor::strip_broken(const std::string& vehicle) {
  state_.fleet.at(vehicle).status = VehicleStatus::broken;
  Route* r = state_.plan.route_of(vehicle);
  if (!r) return;
  auto& p = state_.progress[vehicle];
  std::vector<Stop> kept;
  if (p.fixed == 0) {
    Stop start = r->stops.front();
    start.eta = start.eta ? std::min(*start.eta, state_.clock) : state_.clock;
    kept.push_back(std::move(start));
  } else {
    kept.assign(r->stops.begin(), r->stops.begin() + static_cast<std::ptrdiff_t>(p.fixed));
    if (p.served < p.fixed && kept.back().is_order_stop()) kept.back().voided = true;
  }
  std::set<std::string> freed;
  for (std::size_t i = kept.size(); i < r->stops.size(); ++i) {
    const Stop& s = r->stops[i];
    if (!s.voided && s.is_order_stop()) freed.insert(s.orders.begin(), s.orders.end());
  }
  const Stop& last = kept.back();
  const std::string where = last.node;
  // Parcels aboard are picked up again where the vehicle stopped.
  std::set<std::string> picked, unloaded;
  for (const auto& s : kept) {
    if (s.voided) continue;
    for (const auto& id : s.orders) {
      if (s.action == StopAction::pickup) picked.insert(id);
      if (s.unloads()) unloaded.insert(id);
    }
  }
  for (const auto& id : picked) {
    if (unloaded.count(id)) continue;
    Order& o = state_.orders.at(id);
    if (terminal(o.state)) continue;
    for (auto& s : kept) {
      if (s.voided || s.action != StopAction::pickup) continue;
      if (std::find(s.orders.begin(), s.orders.end(), id) == s.orders.end()) continue;
      if (s.orders.size() == 1) {
        s.voided = true;
      } else {
        std::erase(s.orders, id);
      }
    }
    o.pickup = where;
    o.ready_time = std::max(state_.clock, last.eta.value_or(state_.clock));
    freed.insert(id);
  }
  Stop end{where, StopAction::depot_end, {}, kept.back().eta, 0.0, 0.0};
  if (end.eta && !kept.back().voided) {
    end.eta = *end.eta + kept.back().service_time_s + kept.back().slack_s;
  }
  if (kept.back().action == StopAction::depot_start && kept.size() == 1) end.node = kept[0].node;
  if (kept.back().action != StopAction::depot_end) kept.push_back(std::move(end));
  r->stops = std::move(kept);
  p.fixed = p.served = r->stops.size();
  std::set<std::string> unassigned(state_.plan.unassigned.begin(), state_.plan.unassigned.end());
  unassigned.insert(freed.begin(), freed.end());
  state_.plan.unassigned.assign(unassigned.begin(), unassigned.end());
  sync_states();
}

// ---------------------------------------------------------------------------

std::size_t Advisor::propose(Recommendation rec, const Plan& before) {
  for (const auto& r : rec.plan.routes) {
    const Route* b = before.route_of(r.vehicle);
    Route prior = b ? *b : empty_route(state_.fleet.at(r.vehicle));
    if (!same_structure(prior, r)) rec.changed_routes.push_back({r.vehicle, prior, r});
  }
  rec.unassigned_added = minus(rec.plan.unassigned, before.unassigned);
  rec.unassigned_removed = minus(before.unassigned, rec.plan.unassigned);
  rec.sequence = ++sequence_;
  rec.id = "rec-" + std::to_string(rec.sequence);
  rec.created_at = state_.clock;
  rec.ttl_s = config_.ttl_s;
  rec.base_version = state_.version;
  recs_.push_back(std::move(rec));
  return recs_.size() - 1;
}

namespace {

// Drops orders from every hard-infeasible route until it holds again.
void repair_routes(detail::Solver& s) {
  for (std::size_t sl = 0; sl < s.slots().size(); ++sl) {
    if (!s.evaluate(static_cast<int>(sl)).feasible) s.repair(static_cast<int>(sl));
  }
}

}  // namespace

Plan Advisor::repaired(const Plan& plan, const CvrpInstance& instance,
                       std::uint64_t seed) const {
  detail::Solver s(instance, config_.weights, plan);
  repair_routes(s);
  s.construct(seed);
  return s.materialize();
}

Advisor::Outcome Advisor::run_event(AdhocEvent e) {
  const auto& graph = *state_.graph;
  switch (e.kind) {
    case AdhocKind::new_order: {
      if (!e.order) throw Error(ErrorCode::validation, "new_order event needs an order");
      const Order& o = *e.order;
      if (o.id.empty()) throw Error(ErrorCode::validation, "order id must not be empty");
      if (state_.orders.count(o.id)) {
        throw Error(ErrorCode::conflict, "order '" + o.id + "' already exists", o.id);
      }
      graph.node_index(o.pickup);
      graph.node_index(o.delivery);
      if (o.size_units <= 0) {
        throw Error(ErrorCode::validation, "order '" + o.id + "': size must be positive", o.id);
      }
      break;
    }
    case AdhocKind::vehicle_breakdown: {
      auto it = state_.fleet.find(e.vehicle);
      if (it == state_.fleet.end()) {
        throw Error(ErrorCode::not_found, "unknown vehicle '" + e.vehicle + "'", e.vehicle);
      }
      if (it->second.status == VehicleStatus::broken) {
        throw Error(ErrorCode::conflict, "vehicle '" + e.vehicle + "' is already broken",
                    e.vehicle);
      }
      break;
    }
    case AdhocKind::traffic:
    case AdhocKind::manual: {
      if (!e.traffic) throw Error(ErrorCode::validation, "traffic event needs an event body");
      validate_event(*e.traffic);
      for (const auto& ev : state_.events) {
        if (ev.id == e.traffic->id) {
          throw Error(ErrorCode::conflict, "event '" + ev.id + "' already registered", ev.id);
        }
      }
      resolve_scope(graph, *e.traffic);
      break;
    }
    case AdhocKind::missed_delivery: {
      auto it = state_.orders.find(e.order_id);
      if (it == state_.orders.end()) {
        throw Error(ErrorCode::not_found, "unknown order '" + e.order_id + "'", e.order_id);
      }
      if (terminal(it->second.state) || state_.attempts[e.order_id] == 0) {
        throw Error(ErrorCode::conflict,
                    "no missed delivery attempt recorded for order '" + e.order_id + "'",
                    e.order_id);
      }
      for (const auto& r : state_.plan.routes) {
        for (const auto& s : r.stops) {
          if (s.voided || !s.unloads()) continue;
          if (std::find(s.orders.begin(), s.orders.end(), e.order_id) != s.orders.end()) {
            throw Error(ErrorCode::conflict,
                        "order '" + e.order_id + "' already has a delivery planned", e.order_id);
          }
        }
      }
      break;
    }
  }

  if (e.at && *e.at > state_.clock) state_.clock = *e.at;
  e.sequence = ++sequence_;
  const std::uint64_t seed = config_.seed + e.sequence;
  const auto& w = config_.weights;

  const CvrpInstance pre_inst = instance();
  const Plan pre = retimed(state_.plan, pre_inst);
  const auto pre_report = validate_plan(pre, graph, pre_inst.vehicles, pre_inst.orders);

  std::set<std::string> freed;
  switch (e.kind) {
    case AdhocKind::new_order: {
      Order o = *e.order;
      o.state = OrderState::announced;
      state_.orders[o.id] = o;
      std::set<std::string> u(state_.plan.unassigned.begin(), state_.plan.unassigned.end());
      u.insert(o.id);
      state_.plan.unassigned.assign(u.begin(), u.end());
      ++state_.version;
      break;
    }
    case AdhocKind::vehicle_breakdown: {
      const std::set<std::string> had(state_.plan.unassigned.begin(),
                                      state_.plan.unassigned.end());
      strip_broken(e.vehicle);
      for (const auto& id : state_.plan.unassigned) {
        if (!had.count(id)) freed.insert(id);
      }
      ++state_.version;
      break;
    }
    case AdhocKind::traffic:
    case AdhocKind::manual:
      state_.events.push_back(*e.traffic);
      ++state_.version;
      break;
    case AdhocKind::missed_delivery: break;
  }

  const CvrpInstance inst = instance();
  const Plan base = retimed(state_.plan, inst);
  const double nc = priced(base, inst);
  std::vector<Candidate> cands{{base, nc, Scope::local, {}}};
  bool escalated = false;

  auto global_from = [&](const Plan& from) {
    detail::Solver s(inst, w, from);
    s.strip_free();
    s.construct(seed);
    s.improve(config_.budget);
    return s.materialize();
  };
  auto add = [&](Plan p, Scope scope, std::vector<std::string> failed = {}) {
    const double c = priced(p, inst);
    cands.push_back({std::move(p), c, scope, std::move(failed)});
  };
  if (!std::isfinite(nc)) add(repaired(base, inst, seed), Scope::local);

  switch (e.kind) {
    case AdhocKind::new_order: {
      detail::Solver s(inst, w, base);
      const int job = *s.job_of(e.order->id);
      detail::InsertionChoice best;
      int best_slot = -1;
      for (std::size_t sl = 0; sl < s.slots().size(); ++sl) {
        const auto c = s.best_insertion(job, static_cast<int>(sl));
        if (c.delta < best.delta) {
          best = c;
          best_slot = static_cast<int>(sl);
        }
      }
      double delta = kUnreachable;
      if (best_slot >= 0) {
        s.insert(job, best_slot, best);
        Plan local = s.materialize();
        delta = local.objective - pre.objective;
        add(std::move(local), Scope::local);
      }
      if (best_slot < 0 || delta > config_.theta * pre.objective) {
        escalated = true;
        add(global_from(base), Scope::global);
      }
      break;
    }
    case AdhocKind::vehicle_breakdown: {
      detail::Solver s(inst, w, base);
      s.construct(seed);
      Plan local = s.materialize();
      bool stranded = false;
      for (const auto& id : local.unassigned) stranded = stranded || freed.count(id) > 0;
      add(std::move(local), Scope::local);
      if (stranded) {
        escalated = true;
        add(global_from(base), Scope::global);
      }
      break;
    }
    case AdhocKind::traffic:
    case AdhocKind::manual: {
      std::vector<PlannedRoute> planned;
      for (const auto& r : pre.routes) {
        if (state_.fleet.at(r.vehicle).status == VehicleStatus::broken) continue;
        std::size_t fixed = 0;
        if (auto it = state_.progress.find(r.vehicle); it != state_.progress.end()) {
          fixed = it->second.fixed;
        }
        PlannedRoute pr{r.vehicle, {}};
        for (std::size_t i = std::max<std::size_t>(fixed, 1); i < r.stops.size(); ++i) {
          const auto& from = r.stops[i - 1].node;
          const auto& to = r.stops[i].node;
          if (from == to) continue;
          pr.legs.push_back({i, from, to, pre_inst.travel->path(from, to)});
        }
        planned.push_back(std::move(pr));
      }
      EventContext ctx(graph, state_.events);
      const auto advisories = response_plan(graph, *e.traffic, planned, ctx, state_.clock);
      std::set<std::string> affected;
      for (const auto& a : advisories) affected.insert(a.vehicle);
      if (affected.empty()) break;

      const auto post_report = validate_plan(base, graph, inst.vehicles, inst.orders);
      const bool later = post_report.lateness_total_min > pre_report.lateness_total_min;
      detail::Solver s(inst, w, base);
      std::set<int> slots;
      for (const auto& v : affected) {
        if (auto sl = s.slot_of(v)) slots.insert(*sl);
      }
      if (affected.size() >= config_.k) {
        escalated = true;
        for (std::size_t sl = 0; sl < s.slots().size(); ++sl) s.repair(static_cast<int>(sl));
        s.improve(config_.budget);
        add(s.materialize(), Scope::global);
      } else {
        bool dropped = false;
        for (int sl : slots) {
          if (s.evaluate(sl).feasible) continue;
          s.repair(sl);
          dropped = true;
        }
        if (dropped || later) s.improve(config_.budget, &slots);
        add(s.materialize(), Scope::local);
      }
      break;
    }
    case AdhocKind::missed_delivery: {
      const auto& id = e.order_id;
      detail::Solver s(inst, w, base);
      const bool broken = !std::isfinite(nc);
      if (broken) repair_routes(s);
      auto fail = [&] {
        if (broken) s.construct(seed);
        Plan p = s.materialize();
        const double c = broken ? priced(p, inst) : nc;
        cands.clear();
        cands.push_back({std::move(p), c, Scope::local, {id}});
      };
      if (state_.attempts[id] >= config_.max_attempts) {
        fail();
        break;
      }
      const auto job = s.job_of(id);
      const int slot = job ? s.jobs()[*job].prefix_slot : -1;
      std::optional<detail::InsertionChoice> choice;
      if (slot >= 0) {
        const auto c = s.best_insertion(*job, slot);
        if (c.found()) choice = c;
      }
      if (!choice) {
        fail();
        break;
      }
      s.insert(*job, slot, *choice);
      if (broken) s.construct(seed);
      add(s.materialize(), Scope::local);
      break;
    }
  }

  std::size_t pick = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].cost < cands[pick].cost) pick = i;
  }
  Recommendation rec;
  rec.trigger = e;
  rec.scope = escalated ? Scope::global : cands[pick].scope;
  rec.objective_before = pre.objective;
  rec.objective_no_change = nc;
  rec.objective_after = cands[pick].cost;
  rec.failed_orders = cands[pick].failed;
  rec.plan = std::move(cands[pick].plan);
  return {propose(std::move(rec), pre), std::nullopt};
}

Advisor::Outcome Advisor::run_periodic() {
  const CvrpInstance inst = instance();
  const Plan base = retimed(state_.plan, inst);
  const double nc = priced(base, inst);
  Recommendation rec;
  rec.scope = Scope::global;
  rec.objective_before = base.objective;
  rec.objective_no_change = nc;
  rec.objective_after = nc;
  rec.plan = base;
  detail::Solver s(inst, config_.weights, base);
  s.improve(config_.budget);
  for (Plan p : {s.materialize(), repaired(base, inst, config_.seed + sequence_)}) {
    const double c = priced(p, inst);
    if (c < rec.objective_after) {
      rec.objective_after = c;
      rec.plan = std::move(p);
    }
  }
  return {propose(std::move(rec), base), std::nullopt};
}

std::optional<Plan> Advisor::rebase(const Recommendation& rec) const {
  Plan p = state_.plan;
  for (const auto& change : rec.changed_routes) {
    const auto& vehicle = state_.fleet.at(change.vehicle);
    Route* cur = p.route_of(change.vehicle);
    std::size_t fixed = 0;
    if (auto it = state_.progress.find(change.vehicle); it != state_.progress.end()) {
      fixed = it->second.fixed;
    }
    if (!cur) {
      if (fixed > 0) return std::nullopt;
      p.routes.push_back(change.after);
      continue;
    }
    if (vehicle.status == VehicleStatus::broken && !same_structure(*cur, change.after)) {
      return std::nullopt;
    }
    if (change.after.stops.size() < fixed) return std::nullopt;
    for (std::size_t i = 0; i < fixed; ++i) {
      if (!same_stop(cur->stops[i], change.after.stops[i])) return std::nullopt;
    }
    Route next = change.after;
    for (std::size_t i = 0; i < fixed; ++i) next.stops[i] = cur->stops[i];
    *cur = std::move(next);
  }
  OrderBook orders = state_.orders;
  for (const auto& id : rec.failed_orders) {
    auto it = orders.find(id);
    if (it == orders.end() || terminal(it->second.state)) return std::nullopt;
    it->second.state = OrderState::failed;
  }
  std::set<std::string> u(p.unassigned.begin(), p.unassigned.end());
  u.insert(rec.unassigned_added.begin(), rec.unassigned_added.end());
  for (const auto& id : routed_orders(p)) u.erase(id);
  for (const auto& id : rec.failed_orders) u.erase(id);
  std::erase_if(u, [&](const std::string& id) {
    auto it = orders.find(id);
    return it == orders.end() || terminal(it->second.state);
  });
  p.unassigned.assign(u.begin(), u.end());
  if (!conserved(p, orders)) return std::nullopt;
  return p;
}

Advisor::Outcome Advisor::run_decide(const std::string& id, Verdict verdict) {
  std::size_t idx = recs_.size();
  for (std::size_t i = 0; i < recs_.size(); ++i) {
    if (recs_[i].id == id) idx = i;
  }
  if (idx == recs_.size()) {
    throw Error(ErrorCode::not_found, "unknown recommendation '" + id + "'", id);
  }
  Recommendation& rec = recs_[idx];
  if (rec.status != RecStatus::proposed) {
    throw Error(ErrorCode::conflict,
                "recommendation '" + id + "' is already " + to_string(rec.status), id);
  }
  if (state_.clock > rec.created_at + rec.ttl_s) {
    rec.status = RecStatus::expired;
    return {idx, Error(ErrorCode::expired, "recommendation '" + id + "' outlived its TTL", id)};
  }
  if (verdict == Verdict::reject) {
    rec.status = RecStatus::rejected;
    return {idx, std::nullopt};
  }
  std::optional<Plan> plan;
  if (state_.version == rec.base_version) {
    plan = rec.plan;
  } else {
    plan = rebase(rec);
  }
  if (plan) {
    OrderBook orders = state_.orders;
    for (const auto& f : rec.failed_orders) orders.at(f).state = OrderState::failed;
    CvrpInstance inst = instance();
    inst.orders = orders;
    retime(*plan, inst, config_.weights);
    if (!validate_plan(*plan, *state_.graph, inst.vehicles, orders).feasible()) plan.reset();
  }
  if (!plan) {
    rec.status = RecStatus::expired;
    return {idx, Error(ErrorCode::expired,
                       "recommendation '" + id + "' is stale and no longer feasible", id)};
  }
  install(std::move(*plan), rec.failed_orders);
  rec.status = RecStatus::accepted;
  return {idx, std::nullopt};
}

// ---------------------------------------------------------------------------

XbChoice Advisor::xb_route_choice(const Order& order) const {
  const RoadGraph& graph = *state_.graph;
  const Node& p = graph.node(order.pickup);
  const Node& d = graph.node(order.delivery);
  if (p.country == d.country) {
    throw Error(ErrorCode::validation,
                "order '" + order.id + "' does not cross a border", order.id);
  }
  TravelModel& travel = *this->travel();
  auto join = [&](const std::vector<std::string>& via) -> std::optional<Path> {
    Path out;
    for (std::size_t i = 1; i < via.size(); ++i) {
      auto leg = travel.path(via[i - 1], via[i]);
      if (!leg) return std::nullopt;
      out.edge_ids.insert(out.edge_ids.end(), leg->edge_ids.begin(), leg->edge_ids.end());
      out.total_time_s += leg->total_time_s;
      out.total_distance_m += leg->total_distance_m;
    }
    return out;
  };

  XbChoice choice;
  std::optional<Path> direct;
  for (const auto& n : graph.nodes()) {
    if (n.kind != NodeKind::border_crossing) continue;
    auto path = join({order.pickup, n.id, order.delivery});
    if (!path) continue;
    const double c = path_cost(*path, config_.weights);
    if (c < choice.direct_cost) {
      choice.direct_cost = c;
      choice.crossing = n.id;
      direct = std::move(path);
    }
  }
  auto office_in = [&](const std::string& country) -> std::optional<std::string> {
    std::optional<std::string> best;
    for (const auto& n : graph.nodes()) {
      if (n.kind == NodeKind::exchange_office && n.country == country &&
          (!best || n.id < *best)) {
        best = n.id;
      }
    }
    return best;
  };
  choice.origin_office = office_in(p.country);
  choice.destination_office = office_in(d.country);
  std::optional<Path> chain;
  if (choice.origin_office && choice.destination_office) {
    chain = join({order.pickup, *choice.origin_office, *choice.destination_office,
                  order.delivery});
    if (chain) choice.chain_cost = path_cost(*chain, config_.weights);
  }
  if (!direct && !chain) {
    throw Error(ErrorCode::validation,
                "order '" + order.id + "' has neither a border crossing nor an exchange chain",
                order.id);
  }
  if (direct && choice.direct_cost < choice.chain_cost) {
    choice.mode = XbMode::direct_border;
    choice.path = std::move(*direct);
  } else {
    choice.mode = XbMode::via_exchange;
    choice.path = std::move(*chain);
  }
  return choice;
}

RttiSnapshot Advisor::rtti() const {
  EventContext ctx(*state_.graph, state_.events);
  return publish_rtti(*state_.graph, ctx, state_.monitored, state_.clock);
}

}  // namespace coglo
