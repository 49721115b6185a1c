#include "coglo/simulator.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace coglo {

using json = nlohmann::json;

namespace {

constexpr std::pair<std::string_view, Policy> kPolicies[] = {
    {"static", Policy::static_plan},
    {"reactive", Policy::reactive},
    {"anticipatory", Policy::anticipatory},
};

constexpr Seconds kCollectionMarginS = 900.0;

bool terminal(OrderState s) { return s == OrderState::delivered || s == OrderState::failed; }

// Segment done from the point of view of its chain.
bool settled(OrderState s) { return terminal(s) || s == OrderState::at_exchange; }

double uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::validation, std::string("scenario needs '") + key + "'", key);
  return j.at(key).get<T>();
}

}  // namespace

const char* to_string(Policy policy) {
  for (const auto& [name, value] : kPolicies) {
    if (value == policy) return name.data();
  }
  return "static";
}

Policy policy_from_string(std::string_view s) {
  for (const auto& [name, value] : kPolicies) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::validation, "unknown policy '" + std::string(s) + "'", std::string(s));
}

// ---------------------------------------------------------------------------
// Scenario documents

void validate_scenario(const Scenario& sc) {
  if (!sc.graph) throw Error(ErrorCode::validation, "scenario has no graph");
  const RoadGraph& g = *sc.graph;
  auto node = [&](const std::string& id, const std::string& what) {
    if (!g.find_node(id)) {
      throw Error(ErrorCode::validation, what + " references unknown node '" + id + "'", id);
    }
  };
  for (const auto& [id, v] : sc.fleet) {
    node(v.home_depot, "vehicle '" + id + "'");
    if (v.capacity_units <= 0) {
      throw Error(ErrorCode::validation, "vehicle '" + id + "' needs a positive capacity", id);
    }
  }
  std::set<std::string> ids;
  for (const auto& o : sc.orders) {
    if (!ids.insert(o.id).second) {
      throw Error(ErrorCode::validation, "duplicate order '" + o.id + "'", o.id);
    }
    if (o.id.find('#') != std::string::npos) {
      throw Error(ErrorCode::validation, "order ids may not contain '#'", o.id);
    }
    node(o.pickup, "order '" + o.id + "'");
    node(o.delivery, "order '" + o.id + "'");
    if (o.size_units <= 0) {
      throw Error(ErrorCode::validation, "order '" + o.id + "' needs a positive size", o.id);
    }
  }
  for (const auto& e : sc.events) {
    validate_event(e);
    resolve_scope(g, e);
  }
  for (const auto& b : sc.breakdowns) {
    if (!sc.fleet.count(b.vehicle)) {
      throw Error(ErrorCode::validation, "breakdown of unknown vehicle '" + b.vehicle + "'",
                  b.vehicle);
    }
  }
  for (const auto& m : sc.monitored) {
    node(m.from, "monitored route '" + m.id + "'");
    node(m.to, "monitored route '" + m.id + "'");
  }
  if (!sc.linehaul_vehicle.empty()) {
    auto it = sc.fleet.find(sc.linehaul_vehicle);
    if (it == sc.fleet.end() || !it->second.fixed_route) {
      throw Error(ErrorCode::validation, "line-haul vehicle must be a fixed-route fleet member",
                  sc.linehaul_vehicle);
    }
  }
  if (!(sc.day_end > sc.day_start)) throw Error(ErrorCode::validation, "day must end after it starts");
  if (!(sc.reopt_period_s > 0)) throw Error(ErrorCode::validation, "reopt_period_s must be positive");
  if (!(sc.noise.miss_probability >= 0 && sc.noise.miss_probability <= 1)) {
    throw Error(ErrorCode::validation, "miss_probability must lie in [0, 1]");
  }
  if (!(sc.noise.demand_rate_per_hour >= 0)) {
    throw Error(ErrorCode::validation, "demand_rate_per_hour must be non-negative");
  }
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  try {
    if (!j.is_object()) throw Error(ErrorCode::validation, "scenario must be a JSON object");
    sc.graph_doc = required<json>(j, "graph");
    sc.graph = std::make_shared<RoadGraph>(build_graph(sc.graph_doc));
    sc.seed = required<std::uint64_t>(j, "seed");
    for (const auto& v : j.value("fleet", json::array())) {
      Vehicle veh = vehicle_from_json(v);
      const std::string id = veh.id;
      if (!sc.fleet.emplace(id, std::move(veh)).second) {
        throw Error(ErrorCode::validation, "duplicate vehicle '" + id + "'", id);
      }
    }
    for (const auto& o : j.value("orders", json::array())) sc.orders.push_back(order_from_json(o));
    for (const auto& e : j.value("events", json::array())) sc.events.push_back(event_from_json(e));
    for (const auto& b : j.value("breakdowns", json::array())) {
      sc.breakdowns.push_back({b.at("vehicle").get<std::string>(), b.at("at").get<double>()});
    }
    for (const auto& m : j.value("monitored_routes", json::array())) {
      sc.monitored.push_back({m.at("id").get<std::string>(), m.at("from").get<std::string>(),
                              m.at("to").get<std::string>()});
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      sc.noise.miss_probability = n.value("miss_probability", 0.0);
      sc.noise.demand_rate_per_hour = n.value("demand_rate_per_hour", 0.0);
    }
    sc.knobs = config_from_json(j.value("knobs", json::object()));
    if (j.contains("weights")) sc.knobs.weights = weights_from_json(j.at("weights"));
    if (j.contains("day")) {
      sc.day_start = j.at("day").value("start", sc.day_start);
      sc.day_end = j.at("day").value("end", sc.day_end);
    }
    sc.reopt_period_s = j.value("reopt_period_s", sc.reopt_period_s);
    sc.linehaul_vehicle = j.value("linehaul_vehicle", std::string());
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("scenario: ") + ex.what());
  }
  validate_scenario(sc);
  return sc;
}

json scenario_to_json(const Scenario& sc) {
  json fleet = json::array();
  for (const auto& [id, v] : sc.fleet) fleet.push_back(vehicle_to_json(v));
  json orders = json::array();
  for (const auto& o : sc.orders) orders.push_back(order_to_json(o));
  json events = json::array();
  for (const auto& e : sc.events) events.push_back(event_to_json(e));
  json breakdowns = json::array();
  for (const auto& b : sc.breakdowns) breakdowns.push_back({{"vehicle", b.vehicle}, {"at", b.at}});
  json monitored = json::array();
  for (const auto& m : sc.monitored) {
    monitored.push_back({{"id", m.id}, {"from", m.from}, {"to", m.to}});
  }
  json knobs = config_to_json(sc.knobs);
  knobs.erase("weights");
  json out = {{"graph", sc.graph_doc},
              {"fleet", fleet},
              {"orders", orders},
              {"events", events},
              {"breakdowns", breakdowns},
              {"monitored_routes", monitored},
              {"noise",
               {{"miss_probability", sc.noise.miss_probability},
                {"demand_rate_per_hour", sc.noise.demand_rate_per_hour}}},
              {"seed", sc.seed},
              {"weights", weights_to_json(sc.knobs.weights)},
              {"knobs", knobs},
              {"day", {{"start", sc.day_start}, {"end", sc.day_end}}},
              {"reopt_period_s", sc.reopt_period_s}};
  if (!sc.linehaul_vehicle.empty()) out["linehaul_vehicle"] = sc.linehaul_vehicle;
  return out;
}

// ---------------------------------------------------------------------------
// Trace

json trace_entry_to_json(const TraceEntry& e) {
  return {{"t", e.t}, {"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}};
}

TraceEntry trace_entry_from_json(const json& j) {
  return {j.at("t").get<double>(), j.at("seq").get<std::uint64_t>(),
          j.at("kind").get<std::string>(), j.value("payload", json::object())};
}

std::string trace_to_jsonl(const SimTrace& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += trace_entry_to_json(e).dump();
    out += '\n';
  }
  return out;
}

SimTrace trace_from_jsonl(std::string_view text) {
  SimTrace out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty()) {
      try {
        out.push_back(trace_entry_from_json(json::parse(line)));
      } catch (const json::exception& ex) {
        throw Error(ErrorCode::validation, std::string("trace: ") + ex.what());
      }
    }
    pos = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// KPIs

json kpis_to_json(const KpiReport& r) {
  return {{"load_factor", r.load_factor},
          {"total_distance_km", r.total_distance_km},
          {"total_fuel_l", r.total_fuel_l},
          {"total_cost", r.total_cost},
          {"on_time_rate", r.on_time_rate},
          {"delivered", r.delivered},
          {"missed", r.missed},
          {"reopt_count", r.reopt_count},
          {"recommendations",
           {{"proposed", r.recommendations.proposed},
            {"accepted", r.recommendations.accepted},
            {"rejected", r.recommendations.rejected},
            {"expired", r.recommendations.expired}}},
          {"failed", r.failed},
          {"unassigned_at_end", r.unassigned_at_end}};
}

KpiReport kpis_from_json(const json& j) {
  KpiReport r;
  try {
    r.load_factor = j.at("load_factor").get<double>();
    r.total_distance_km = j.at("total_distance_km").get<double>();
    r.total_fuel_l = j.at("total_fuel_l").get<double>();
    r.total_cost = j.at("total_cost").get<double>();
    r.on_time_rate = j.at("on_time_rate").get<double>();
    r.delivered = j.value("delivered", std::size_t{0});
    r.missed = j.value("missed", std::size_t{0});
    r.reopt_count = j.value("reopt_count", std::size_t{0});
    if (j.contains("recommendations")) {
      const auto& c = j.at("recommendations");
      r.recommendations = {c.value("proposed", std::size_t{0}), c.value("accepted", std::size_t{0}),
                           c.value("rejected", std::size_t{0}), c.value("expired", std::size_t{0})};
    }
    r.failed = j.value("failed", std::size_t{0});
    r.unassigned_at_end = j.value("unassigned_at_end", std::size_t{0});
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("kpi report: ") + ex.what());
  }
  return r;
}

KpiReport kpis(const SimTrace& trace, const Fleet& fleet, const ObjectiveWeights& weights) {
  KpiReport r;
  double carried = 0.0, offered = 0.0, late_min = 0.0;
  std::size_t on_time = 0;
  std::set<std::string> used;
  for (const auto& e : trace) {
    const json& p = e.payload;
    if (e.kind == "depart") {
      const double km = p.at("km").get<double>();
      if (!(km > 0.0)) continue;
      const std::string vehicle = p.at("vehicle").get<std::string>();
      const auto it = fleet.find(vehicle);
      if (it == fleet.end()) continue;
      const Vehicle& v = it->second;
      const double cap = v.capacity_units;
      const double load = p.at("load").get<double>();
      used.insert(vehicle);
      r.total_distance_km += km;
      carried += load * km;
      offered += cap * km;
      r.total_fuel_l += km * (v.fuel_base_l_per_km + v.fuel_load_coeff_l_per_km * load / cap);
      r.total_cost += km * v.cost_per_km;
    } else if (e.kind == "delivery_attempt") {
      for (const auto& parcel : p.value("parcels", json::array())) {
        ++r.delivered;
        if (parcel.at("on_time").get<bool>()) ++on_time;
        late_min += parcel.value("late_min", 0.0);
      }
    } else if (e.kind == "delivery_missed") {
      ++r.missed;
    } else if (e.kind == "reopt_tick") {
      ++r.reopt_count;
    } else if (e.kind == "recommendation_emitted") {
      ++r.recommendations.proposed;
    } else if (e.kind == "recommendation_decided") {
      const std::string status = p.value("status", std::string());
      if (status == "accepted") ++r.recommendations.accepted;
      if (status == "rejected") ++r.recommendations.rejected;
      if (status == "expired") ++r.recommendations.expired;
    } else if (e.kind == "order_closed") {
      const std::string outcome = p.value("outcome", std::string());
      if (outcome == "failed") ++r.failed;
      if (outcome == "unassigned") ++r.unassigned_at_end;
    }
  }
  for (const auto& id : used) r.total_cost += fleet.at(id).fixed_cost;
  r.total_cost += weights.w_late * late_min;
  r.load_factor = offered > 0.0 ? std::clamp(carried / offered, 0.0, 1.0) : 0.0;
  r.on_time_rate = r.delivered ? static_cast<double>(on_time) / static_cast<double>(r.delivered) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

enum class Ev { announce, depart, arrive, service, event_start, event_end, breakdown, tick };

struct Item {
  Seconds t = 0.0;
  std::uint64_t seq = 0;
  Ev kind = Ev::tick;
  std::string key;        // vehicle id
  std::size_t index = 0;  // parcel, event or breakdown index
  std::uint64_t epoch = 0;
};

struct Later {
  bool operator()(const Item& a, const Item& b) const {
    return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
  }
};

struct Truck {
  std::string node;
  bool moving = false;
  bool waiting = false;
  bool pending = false;  // a depart or service is queued
  bool done = false;
  bool broken = false;
  std::uint64_t epoch = 0;
  std::map<std::string, int> aboard;

  int load() const {
    int n = 0;
    for (const auto& [id, units] : aboard) n += units;
    return n;
  }
};

enum class Outcome { open, delivered, failed };

struct Parcel {
  Order order;
  std::vector<std::string> segments;  // last one reaches the customer
  std::string mode = "plain";
  bool planned = false;
  Outcome outcome = Outcome::open;
};

class Simulation {
 public:
  Simulation(const Scenario& sc, Policy policy) : sc_(sc), policy_(policy), noise_(sc.seed) {}

  SimResult run();

 private:
  bool adaptive() const { return policy_ != Policy::static_plan; }
  void push(Seconds t, Ev kind, std::string key = {}, std::size_t index = 0,
            std::uint64_t epoch = 0) {
    queue_.push({t, ++queue_seq_, kind, std::move(key), index, epoch});
  }
  void record(Seconds t, std::string kind, json payload) {
    result_.trace.push_back({t, ++trace_seq_, std::move(kind), std::move(payload)});
  }

  void generate_demand();
  AdvisorConfig advisor_config() const;
  std::vector<Order> expand(std::size_t index, const Advisor* chooser);
  Route linehaul_route(const WorldState& world);
  void open_day();

  void on_announce(const Item& item);
  void on_depart(const Item& item);
  void on_arrive(const Item& item);
  void on_service(const Item& item);
  void on_event_start(const Item& item);
  void on_breakdown(const Item& item);
  void on_tick(const Item& item);

  void settle(std::size_t rec_index, Seconds t);
  void check_plan(const std::string& when);
  void kick(Seconds t);
  Seconds availability(const std::string& order) const;
  void fail_chain(const std::string& segment, Seconds t);
  void handed_over(const std::string& segment, Seconds t);
  void close_day();
  std::optional<TravelModel::Leg> physical_leg(const std::string& from, const std::string& to,
                                               Seconds t);
  Seconds next_boundary(Seconds t) const;

  const Scenario& sc_;
  Policy policy_;
  std::mt19937_64 noise_;
  std::unique_ptr<Advisor> adv_;
  std::priority_queue<Item, std::vector<Item>, Later> queue_;
  std::uint64_t queue_seq_ = 0;
  std::uint64_t trace_seq_ = 0;
  SimResult result_;

  std::vector<Parcel> parcels_;
  std::map<std::string, std::size_t> parcel_of_;  // segment id -> parcel
  std::map<std::string, Seconds> available_;      // segment id -> parcel at its pickup
  std::map<std::string, std::vector<std::string>> waiters_;  // segment -> vehicles
  std::map<std::string, Truck> trucks_;
  std::unique_ptr<EventContext> physical_;
  std::shared_ptr<TravelModel> physical_travel_;
  std::set<std::string> known_events_;
  Seconds now_ = 0.0;
};

AdvisorConfig Simulation::advisor_config() const {
  AdvisorConfig c = sc_.knobs;
  c.seed = sc_.seed;
  if (policy_ != Policy::anticipatory) c.alpha = 0.0;
  if (!c.stats.miss_probability.count(NodeKind::customer)) {
    c.stats.miss_probability[NodeKind::customer] = sc_.noise.miss_probability;
  }
  return c;
}

void Simulation::generate_demand() {
  for (const auto& o : sc_.orders) parcels_.push_back({o, {}, "plain", false, Outcome::open});
  const double rate = sc_.noise.demand_rate_per_hour;
  if (!(rate > 0.0)) return;
  std::map<std::string, std::vector<std::string>> customers;
  for (const auto& n : sc_.graph->nodes()) {
    if (n.kind == NodeKind::customer) customers[n.country].push_back(n.id);
  }
  std::vector<std::vector<std::string>*> pools;
  for (auto& [country, ids] : customers) {
    if (ids.size() >= 2) pools.push_back(&ids);
  }
  if (pools.empty()) return;
  const auto& factor = sc_.knobs.stats.hourly_demand_factor;
  const double peak = std::max(1e-9, *std::max_element(factor.begin(), factor.end()));
  std::mt19937_64 rng(sc_.seed ^ 0x9e3779b97f4a7c15ULL);
  const double lambda = rate * peak / 3600.0;
  Seconds t = sc_.day_start;
  std::size_t n = 0;
  while (true) {
    t += -std::log(1.0 - uniform(rng)) / lambda;
    if (t >= sc_.day_end) break;
    const auto hour = static_cast<std::size_t>(std::fmod(t / 3600.0, 24.0));
    if (uniform(rng) * peak > factor[hour]) continue;
    auto& pool = *pools[rng() % pools.size()];
    const std::size_t a = rng() % pool.size();
    std::size_t b = rng() % (pool.size() - 1);
    if (b >= a) ++b;
    Order o;
    o.id = "dyn-" + std::to_string(++n);
    o.size_units = 1 + static_cast<int>(rng() % 2);
    o.pickup = pool[a];
    o.delivery = pool[b];
    o.announce_time = t;
    o.sla_deadline = t + 4 * 3600.0;
    parcels_.push_back({o, {}, "plain", false, Outcome::open});
  }
}

// Splits a cross-border parcel into collection, line-haul and distribution
// segments when the policy (or the route choice) sends it via the offices.
std::vector<Order> Simulation::expand(std::size_t index, const Advisor* chooser) {
  Parcel& parcel = parcels_[index];
  const Order& o = parcel.order;
  const RoadGraph& g = *sc_.graph;
  const std::string& pc = g.node(o.pickup).country;
  const std::string& dc = g.node(o.delivery).country;
  auto plain = [&]() {
    parcel.segments = {o.id};
    parcel_of_[o.id] = index;
    available_[o.id] = std::max(o.announce_time, o.ready_time.value_or(o.announce_time));
    return std::vector<Order>{o};
  };
  if (pc.empty() || dc.empty() || pc == dc || sc_.linehaul_vehicle.empty()) return plain();
  std::optional<std::string> origin, destination;
  if (chooser) {
    const XbChoice choice = chooser->xb_route_choice(o);
    if (choice.mode == XbMode::direct_border) {
      parcel.mode = "direct";
      return plain();
    }
    origin = choice.origin_office;
    destination = choice.destination_office;
  } else {
    for (const auto& n : g.nodes()) {
      if (n.kind != NodeKind::exchange_office) continue;
      if (n.country == pc && (!origin || n.id < *origin)) origin = n.id;
      if (n.country == dc && (!destination || n.id < *destination)) destination = n.id;
    }
  }
  if (!origin || !destination) return plain();
  parcel.mode = "chain";
  std::vector<Order> segs(3, o);
  const std::string nodes[4] = {o.pickup, *origin, *destination, o.delivery};
  for (std::size_t i = 0; i < 3; ++i) {
    segs[i].id = o.id + "#" + std::to_string(i + 1);
    segs[i].pickup = nodes[i];
    segs[i].delivery = nodes[i + 1];
    segs[i].tw_delivery.reset();
    if (i > 0) segs[i].ready_time.reset();
    parcel.segments.push_back(segs[i].id);
    parcel_of_[segs[i].id] = index;
    available_[segs[i].id] = i == 0 ? std::max(o.announce_time, o.ready_time.value_or(0.0))
                                    : kUnreachable;
  }
  segs[2].tw_delivery = o.tw_delivery;
  return segs;
}

// Timetable of the shuttle: load at home, run to each other office and back.
Route Simulation::linehaul_route(const WorldState& world) {
  const Vehicle& lh = world.fleet.at(sc_.linehaul_vehicle);
  const std::string home = lh.home_depot;
  std::map<std::string, std::vector<std::string>> from, to;
  for (const auto& [id, o] : world.orders) {
    if (id.size() < 2 || id.substr(id.size() - 2) != "#2") continue;
    from[o.pickup].push_back(id);
    to[o.delivery].push_back(id);
  }
  Route r = empty_route(lh);
  auto stop = [&](const std::string& node, StopAction a, const std::string& id) {
    Stop s{node, a, {id}, std::nullopt, sc_.knobs.service_time_s, 0.0};
    r.stops.insert(r.stops.end() - 1, s);
  };
  for (const auto& id : from[home]) stop(home, StopAction::pickup, id);
  for (const auto& [office, ids] : to) {
    if (office == home) continue;
    for (const auto& id : ids) stop(office, StopAction::exchange_handover, id);
    for (const auto& id : from[office]) stop(office, StopAction::pickup, id);
  }
  for (const auto& [office, ids] : from) {
    if (office != home && !to.count(office)) {
      for (const auto& id : ids) stop(office, StopAction::pickup, id);
    }
  }
  for (const auto& id : to[home]) stop(home, StopAction::exchange_handover, id);
  return r;
}

void Simulation::open_day() {
  const RoadGraph& g = *sc_.graph;
  physical_ = std::make_unique<EventContext>(g, sc_.events);
  for (const auto& [id, v] : sc_.fleet) trucks_[id].node = v.home_depot;

  WorldState world;
  world.graph = sc_.graph;
  world.monitored = sc_.monitored;
  world.fleet = sc_.fleet;
  world.clock = sc_.day_start;
  if (adaptive()) {
    for (const auto& e : sc_.events) {
      if (e.valid_from <= sc_.day_start && e.valid_to > sc_.day_start) {
        world.events.push_back(e);
        known_events_.insert(e.id);
      }
    }
  }
  const AdvisorConfig config = advisor_config();
  std::unique_ptr<Advisor> chooser;
  if (adaptive()) chooser = std::make_unique<Advisor>(world, config);
  for (std::size_t i = 0; i < parcels_.size(); ++i) {
    if (parcels_[i].order.announce_time > sc_.day_start) continue;
    for (auto& seg : expand(i, chooser.get())) world.orders[seg.id] = seg;
    parcels_[i].planned = true;
  }
  // Chain deadlines follow the shuttle timetable.
  Route shuttle;
  if (!sc_.linehaul_vehicle.empty()) {
    shuttle = linehaul_route(world);
    EventContext ctx(g, world.events);
    TravelModel travel(g, ctx, sc_.day_start);
    compute_etas(shuttle, world.fleet.at(sc_.linehaul_vehicle), travel, sc_.day_start,
                 &world.orders);
    for (const auto& s : shuttle.stops) {
      if (!s.is_order_stop() || !s.eta) continue;
      const std::string parent = s.orders[0].substr(0, s.orders[0].size() - 2);
      if (s.action == StopAction::pickup) {
        world.orders.at(parent + "#1").sla_deadline = *s.eta - kCollectionMarginS;
      } else {
        world.orders.at(parent + "#3").ready_time = *s.eta + s.service_time_s;
      }
    }
  }
  adv_ = std::make_unique<Advisor>(std::move(world), config);
  for (std::size_t i = 0; i < parcels_.size(); ++i) {
    if (!parcels_[i].planned) continue;
    const Order& o = parcels_[i].order;
    record(sc_.day_start, "order_announced",
           {{"order", o.id}, {"announce_time", o.announce_time}, {"mode", parcels_[i].mode}});
  }
  if (shuttle.stops.size() > 2) {
    adv_->install_fixed_route(shuttle);
    check_plan("fixed route");
  }
  adv_->daily_orchestration();
  check_plan("daily");

  for (std::size_t i = 0; i < parcels_.size(); ++i) {
    if (!parcels_[i].planned) push(parcels_[i].order.announce_time, Ev::announce, {}, i);
  }
  for (std::size_t i = 0; i < sc_.events.size(); ++i) {
    const auto& e = sc_.events[i];
    if (e.valid_to <= sc_.day_start) continue;
    push(std::max(e.valid_from, sc_.day_start), Ev::event_start, {}, i);
    push(e.valid_to, Ev::event_end, {}, i);
  }
  for (std::size_t i = 0; i < sc_.breakdowns.size(); ++i) {
    push(std::max(sc_.breakdowns[i].at, sc_.day_start), Ev::breakdown,
         sc_.breakdowns[i].vehicle, i);
  }
  if (adaptive() && !parcels_.empty() && sc_.day_start + sc_.reopt_period_s <= sc_.day_end) {
    push(sc_.day_start + sc_.reopt_period_s, Ev::tick);
  }
  kick(sc_.day_start);
}

void Simulation::check_plan(const std::string& when) {
  const WorldState& s = adv_->state();
  const auto report = validate_plan(s.plan, *s.graph, s.fleet, s.orders);
  ++result_.plans_checked;
  for (const auto& v : report.violations) {
    result_.plan_violations.push_back(when + ": " + to_string(v.kind) + " " + v.vehicle + " " +
                                      v.order + " " + v.message);
  }
}

// Queues a departure for every vehicle still at its depot with work planned.
void Simulation::kick(Seconds t) {
  const WorldState& s = adv_->state();
  for (auto& [id, truck] : trucks_) {
    if (truck.moving || truck.waiting || truck.pending || truck.done || truck.broken) continue;
    const Route* r = s.plan.route_of(id);
    if (!r) continue;
    auto pit = s.progress.find(id);
    if (pit != s.progress.end() && pit->second.fixed > 0) continue;
    const bool work = std::any_of(r->stops.begin(), r->stops.end(), [](const Stop& st) {
      return st.is_order_stop() && !st.voided;
    });
    if (!work) continue;
    truck.pending = true;
    push(std::max(t, s.fleet.at(id).shift_start), Ev::depart, id, 0, truck.epoch);
  }
}

Seconds Simulation::availability(const std::string& order) const {
  Seconds t = 0.0;
  if (auto it = available_.find(order); it != available_.end()) t = it->second;
  const auto& o = adv_->state().orders.at(order);
  return std::max(t, o.ready_time.value_or(0.0));
}

Seconds Simulation::next_boundary(Seconds t) const {
  Seconds best = kUnreachable;
  for (const auto& e : sc_.events) {
    if (e.valid_from > t) best = std::min(best, e.valid_from);
    if (e.valid_to > t) best = std::min(best, e.valid_to);
  }
  return best;
}

std::optional<TravelModel::Leg> Simulation::physical_leg(const std::string& from,
                                                         const std::string& to, Seconds t) {
  auto times = snapshot_edge_times(*sc_.graph, t, *physical_);
  if (!physical_travel_ || physical_travel_->edge_times() != times) {
    physical_travel_ = std::make_shared<TravelModel>(*sc_.graph, std::move(times), t);
  }
  const auto leg = physical_travel_->leg(from, to);
  if (is_unreachable(leg.time_s)) return std::nullopt;
  return leg;
}

void Simulation::on_depart(const Item& item) {
  Truck& truck = trucks_.at(item.key);
  if (item.epoch != truck.epoch || truck.broken || truck.done) return;
  truck.pending = false;
  const WorldState& s = adv_->state();
  const Route* r = s.plan.route_of(item.key);
  if (!r) return;
  const auto pit = s.progress.find(item.key);
  const std::size_t fixed = pit == s.progress.end() ? 0 : pit->second.fixed;
  const std::size_t next = std::max<std::size_t>(fixed, 1);
  const bool work = std::any_of(r->stops.begin(), r->stops.end(), [](const Stop& st) {
    return st.is_order_stop() && !st.voided;
  });
  if (fixed == 0 && !work) return;
  if (next >= r->stops.size()) {
    truck.done = true;
    return;
  }
  const std::string to = r->stops[next].node;
  const auto leg = physical_leg(truck.node, to, item.t);
  if (!leg) {
    const Seconds retry = next_boundary(item.t);
    if (std::isfinite(retry)) {
      truck.pending = true;
      push(retry, Ev::depart, item.key, 0, truck.epoch);
    } else {
      truck.done = true;
    }
    return;
  }
  const Seconds arrival = item.t + leg->time_s;
  record(item.t, "depart",
         {{"vehicle", item.key},
          {"from", truck.node},
          {"to", to},
          {"km", leg->distance_m / 1000.0},
          {"load", truck.load()},
          {"capacity", s.fleet.at(item.key).capacity_units}});
  adv_->depart(item.key, item.t, arrival);
  truck.moving = true;
  push(arrival, Ev::arrive, item.key, 0, truck.epoch);
}

void Simulation::on_arrive(const Item& item) {
  Truck& truck = trucks_.at(item.key);
  if (item.epoch != truck.epoch || truck.broken) return;
  truck.moving = false;
  const WorldState& s = adv_->state();
  const Route& r = *s.plan.route_of(item.key);
  const Stop& stop = r.stops[s.progress.at(item.key).fixed - 1];
  truck.node = stop.node;
  record(item.t, "arrive",
         {{"vehicle", item.key}, {"node", stop.node}, {"action", to_string(stop.action)}});
  on_service(item);
}

void Simulation::on_service(const Item& item) {
  Truck& truck = trucks_.at(item.key);
  if (item.epoch != truck.epoch || truck.broken) return;
  truck.pending = false;
  truck.waiting = false;
  const Seconds t = item.t;
  const WorldState& s = adv_->state();
  const Stop stop = s.plan.route_of(item.key)->stops[s.progress.at(item.key).fixed - 1];
  std::vector<std::string> live;
  for (const auto& id : stop.orders) {
    if (!terminal(s.orders.at(id).state)) live.push_back(id);
  }
  auto next = [&](Seconds at) {
    truck.pending = true;
    push(at, Ev::depart, item.key, 0, truck.epoch);
  };

  if (stop.action == StopAction::depot_end) {
    adv_->serve(item.key, t);
    truck.done = true;
    return;
  }
  if (stop.action == StopAction::depot_start) {
    adv_->serve(item.key, t);
    next(t);
    return;
  }
  if (live.empty() || stop.voided) {
    adv_->serve(item.key, t, true);
    next(t);
    return;
  }
  if (stop.action == StopAction::pickup) {
    Seconds ready = 0.0;
    for (const auto& id : live) ready = std::max(ready, availability(id));
    if (ready > t && s.fleet.at(item.key).fixed_route) {
      // The shuttle keeps its timetable; missing parcels stay behind.
      for (const auto& id : live) {
        if (availability(id) > t) fail_chain(id, t);
      }
      on_service(item);
      return;
    }
    if (ready > t) {
      if (std::isfinite(ready)) {
        truck.pending = true;
        push(ready, Ev::service, item.key, 0, truck.epoch);
      } else {
        truck.waiting = true;
        for (const auto& id : live) waiters_[id].push_back(item.key);
      }
      return;
    }
    adv_->serve(item.key, t);
    for (const auto& id : live) truck.aboard[id] = s.orders.at(id).size_units;
    next(t + stop.service_time_s);
    return;
  }

  const bool at_customer = stop.action == StopAction::delivery &&
                           sc_.graph->node(stop.node).kind == NodeKind::customer;
  bool missed = false;
  json parcels = json::array();
  if (at_customer) missed = uniform(noise_) < sc_.noise.miss_probability;
  if (!missed) {
    for (const auto& id : live) {
      Parcel& p = parcels_[parcel_of_.at(id)];
      if (p.segments.back() != id) continue;
      const double late = std::max(0.0, t - p.order.due()) / 60.0;
      parcels.push_back({{"order", p.order.id}, {"on_time", late <= 0.0}, {"late_min", late}});
    }
  }
  if (stop.action == StopAction::delivery) {
    record(t, "delivery_attempt",
           {{"vehicle", item.key},
            {"node", stop.node},
            {"orders", live},
            {"outcome", missed ? "missed" : "delivered"},
            {"parcels", parcels}});
  }
  if (missed) {
    adv_->serve(item.key, t, true);
    record(t, "delivery_missed", {{"vehicle", item.key}, {"node", stop.node}, {"orders", live}});
    next(t + stop.service_time_s);
    for (const auto& id : live) {
      if (adaptive()) {
        AdhocEvent ev;
        ev.kind = AdhocKind::missed_delivery;
        ev.order_id = id;
        ev.at = t;
        adv_->handle_event(ev);
        settle(adv_->recommendations().size() - 1, t);
      } else {
        fail_chain(id, t);
      }
    }
    return;
  }
  adv_->serve(item.key, t);
  for (const auto& id : live) {
    truck.aboard.erase(id);
    Parcel& p = parcels_[parcel_of_.at(id)];
    if (p.segments.back() == id) {
      p.outcome = Outcome::delivered;
    } else {
      handed_over(id, t + stop.service_time_s);
    }
  }
  next(t + stop.service_time_s);
}

void Simulation::handed_over(const std::string& segment, Seconds t) {
  Parcel& p = parcels_[parcel_of_.at(segment)];
  auto it = std::find(p.segments.begin(), p.segments.end(), segment);
  if (it == p.segments.end() || it + 1 == p.segments.end()) return;
  const std::string following = *(it + 1);
  available_[following] = t;
  auto w = waiters_.find(following);
  if (w == waiters_.end()) return;
  for (const auto& vehicle : w->second) {
    Truck& truck = trucks_.at(vehicle);
    if (!truck.waiting || truck.broken) continue;
    truck.waiting = false;
    truck.pending = true;
    push(t, Ev::service, vehicle, 0, truck.epoch);
  }
  waiters_.erase(w);
}

void Simulation::fail_chain(const std::string& segment, Seconds t) {
  Parcel& p = parcels_[parcel_of_.at(segment)];
  p.outcome = Outcome::failed;
  for (const auto& id : p.segments) {
    if (!settled(adv_->state().orders.at(id).state)) adv_->fail_order(id);
    auto w = waiters_.find(id);
    if (w == waiters_.end()) continue;
    for (const auto& vehicle : w->second) {
      Truck& truck = trucks_.at(vehicle);
      if (!truck.waiting || truck.broken) continue;
      truck.waiting = false;
      truck.pending = true;
      push(t, Ev::service, vehicle, 0, truck.epoch);
    }
    waiters_.erase(w);
  }
}

void Simulation::settle(std::size_t rec_index, Seconds t) {
  const Recommendation rec = adv_->recommendations().at(rec_index);
  ++result_.recommendations_checked;
  if (std::isfinite(rec.objective_no_change) &&
      rec.objective_after > rec.objective_no_change + 1e-9 * std::max(1.0, std::abs(rec.objective_no_change))) {
    ++result_.worse_than_no_change;
  }
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  record(t, "recommendation_emitted",
         {{"id", rec.id},
          {"trigger", rec.trigger ? to_string(rec.trigger->kind) : "periodic"},
          {"scope", to_string(rec.scope)},
          {"no_change", rec.no_change()},
          {"objective_no_change", num(rec.objective_no_change)},
          {"objective_after", num(rec.objective_after)}});
  try {
    adv_->decide(rec.id, Verdict::accept);
  } catch (const Error&) {
  }
  const RecStatus status = adv_->recommendation(rec.id).status;
  record(t, "recommendation_decided",
         {{"id", rec.id}, {"verdict", "accept"}, {"status", to_string(status)}});
  if (status == RecStatus::accepted) {
    for (const auto& id : rec.failed_orders) {
      if (parcel_of_.count(id)) fail_chain(id, t);
    }
    check_plan("accept " + rec.id);
  }
  kick(t);
}

void Simulation::on_announce(const Item& item) {
  Parcel& p = parcels_[item.index];
  record(item.t, "order_announced",
         {{"order", p.order.id}, {"announce_time", p.order.announce_time},
          {"mode", adaptive() ? "direct" : "unplanned"}});
  if (!adaptive()) return;
  p.planned = true;
  p.segments = {p.order.id};
  parcel_of_[p.order.id] = item.index;
  available_[p.order.id] = p.order.ready_time.value_or(item.t);
  AdhocEvent ev;
  ev.kind = AdhocKind::new_order;
  ev.order = p.order;
  ev.at = item.t;
  adv_->handle_event(ev);
  settle(adv_->recommendations().size() - 1, item.t);
}

void Simulation::on_event_start(const Item& item) {
  const TrafficEvent& e = sc_.events[item.index];
  record(item.t, "event_start", {{"type", "traffic"}, {"event", e.id}, {"kind", to_string(e.kind)}});
  if (!adaptive() || known_events_.count(e.id)) return;
  known_events_.insert(e.id);
  AdhocEvent ev;
  ev.kind = AdhocKind::traffic;
  ev.traffic = e;
  ev.at = item.t;
  adv_->handle_event(ev);
  settle(adv_->recommendations().size() - 1, item.t);
}

void Simulation::on_breakdown(const Item& item) {
  Truck& truck = trucks_.at(item.key);
  record(item.t, "event_start", {{"type", "vehicle_breakdown"}, {"vehicle", item.key}});
  if (truck.broken) return;
  truck.broken = true;
  ++truck.epoch;
  truck.moving = truck.waiting = truck.pending = false;
  if (!adaptive()) return;
  truck.aboard.clear();
  AdhocEvent ev;
  ev.kind = AdhocKind::vehicle_breakdown;
  ev.vehicle = item.key;
  ev.at = item.t;
  adv_->handle_event(ev);
  settle(adv_->recommendations().size() - 1, item.t);
}

void Simulation::on_tick(const Item& item) {
  record(item.t, "reopt_tick", json::object());
  adv_->advance_clock(item.t);
  adv_->periodic_reoptimize();
  settle(adv_->recommendations().size() - 1, item.t);
  const bool open = std::any_of(parcels_.begin(), parcels_.end(),
                                [](const Parcel& p) { return p.outcome == Outcome::open; });
  if (open && item.t + sc_.reopt_period_s <= sc_.day_end) {
    push(item.t + sc_.reopt_period_s, Ev::tick);
  }
}

void Simulation::close_day() {
  const WorldState& s = adv_->state();
  for (auto& p : parcels_) {
    if (p.outcome == Outcome::open && p.planned) {
      for (const auto& id : p.segments) {
        if (s.orders.count(id) && s.orders.at(id).state == OrderState::failed) {
          p.outcome = Outcome::failed;
        }
      }
    }
    const char* outcome = p.outcome == Outcome::delivered ? "delivered"
                          : p.outcome == Outcome::failed  ? "failed"
                                                          : "unassigned";
    record(now_, "order_closed", {{"order", p.order.id}, {"outcome", outcome}});
  }
}

SimResult Simulation::run() {
  validate_scenario(sc_);
  now_ = sc_.day_start;
  generate_demand();
  open_day();
  while (!queue_.empty()) {
    const Item item = queue_.top();
    queue_.pop();
    now_ = std::max(now_, item.t);
    switch (item.kind) {
      case Ev::announce: on_announce(item); break;
      case Ev::depart: on_depart(item); break;
      case Ev::arrive: on_arrive(item); break;
      case Ev::service: on_service(item); break;
      case Ev::event_start: on_event_start(item); break;
      case Ev::event_end:
        record(item.t, "event_end", {{"event", sc_.events[item.index].id}});
        break;
      case Ev::breakdown: on_breakdown(item); break;
      case Ev::tick: on_tick(item); break;
    }
  }
  close_day();
  result_.report = kpis(result_.trace, sc_.fleet, sc_.knobs.weights);
  return std::move(result_);
}

}  // namespace

SimResult run(const Scenario& scenario, Policy policy) {
  return Simulation(scenario, policy).run();
}

// ---------------------------------------------------------------------------
// Comparison

const KpiDelta& DeltaReport::row(std::string_view kpi) const {
  for (const auto& r : rows) {
    if (r.kpi == kpi) return r;
  }
  throw Error(ErrorCode::not_found, "no KPI '" + std::string(kpi) + "'", std::string(kpi));
}

DeltaReport compare(const KpiReport& a, const KpiReport& b) {
  DeltaReport out;
  auto add = [&](std::string kpi, std::string category, double x, double y, bool higher) {
    KpiDelta d{std::move(kpi), std::move(category), x, y, y - x, std::nullopt, higher};
    if (x != 0.0) d.percent = 100.0 * (y - x) / std::abs(x);
    out.rows.push_back(std::move(d));
  };
  auto n = [](std::size_t v) { return static_cast<double>(v); };
  add("load_factor", "load factor", a.load_factor, b.load_factor, true);
  add("total_distance_km", "route length", a.total_distance_km, b.total_distance_km, false);
  add("total_fuel_l", "fuel", a.total_fuel_l, b.total_fuel_l, false);
  add("total_cost", "cost", a.total_cost, b.total_cost, false);
  add("on_time_rate", "customer satisfaction", a.on_time_rate, b.on_time_rate, true);
  add("delivered", "customer satisfaction", n(a.delivered), n(b.delivered), true);
  add("missed", "customer satisfaction", n(a.missed), n(b.missed), false);
  add("failed", "customer satisfaction", n(a.failed), n(b.failed), false);
  add("unassigned_at_end", "customer satisfaction", n(a.unassigned_at_end),
      n(b.unassigned_at_end), false);
  return out;
}

json delta_to_json(const DeltaReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"kpi", r.kpi},
                    {"category", r.category},
                    {"a", r.a},
                    {"b", r.b},
                    {"delta", r.delta},
                    {"percent", r.percent ? json(*r.percent) : json("undefined")},
                    {"improved", r.improved()}});
  }
  return {{"rows", rows}};
}

std::string delta_table(const DeltaReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "kpi" << std::right << std::setw(14) << "a"
     << std::setw(14) << "b" << std::setw(14) << "delta" << std::setw(12) << "percent" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : report.rows) {
    os << std::left << std::setw(20) << r.kpi << std::right << std::setw(14) << r.a
       << std::setw(14) << r.b << std::setw(14) << r.delta;
    if (r.percent) {
      std::ostringstream pct;
      pct << std::fixed << std::setprecision(2) << *r.percent << '%';
      os << std::setw(12) << pct.str();
    } else {
      os << std::setw(12) << "undefined";
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Cross-border scenario

namespace {

constexpr double kKmPerDegree = 111.32;

struct Layout {
  json nodes = json::array();
  json edges = json::array();
  std::map<std::string, std::pair<double, double>> at;

  void node(const std::string& id, double x, double y, NodeKind kind, const std::string& country) {
    nodes.push_back({{"id", id},
                     {"lat", y / kKmPerDegree},
                     {"lon", x / kKmPerDegree},
                     {"kind", to_string(kind)},
                     {"country", country}});
    at[id] = {x, y};
  }
  // Two-way road, length from the coordinates times a winding factor.
  void road(const std::string& a, const std::string& b, double speed_kmh, double winding = 1.15) {
    const auto [ax, ay] = at.at(a);
    const auto [bx, by] = at.at(b);
    const double km = std::max(0.3, std::hypot(ax - bx, ay - by) * winding);
    edges.push_back({{"id", a + "-" + b}, {"from", a}, {"to", b}, {"length_m", km * 1000.0},
                     {"free_flow_speed_kmh", speed_kmh}});
    edges.push_back({{"id", b + "-" + a}, {"from", b}, {"to", a}, {"length_m", km * 1000.0},
                     {"free_flow_speed_kmh", speed_kmh}});
  }
};

Vehicle van(const std::string& id, const std::string& depot, Seconds start, Seconds end) {
  Vehicle v;
  v.id = id;
  v.capacity_units = 10;
  v.home_depot = depot;
  v.shift_start = start;
  v.shift_end = end;
  v.cost_per_km = 0.6;
  v.fixed_cost = 25.0;
  v.fuel_base_l_per_km = 0.09;
  v.fuel_load_coeff_l_per_km = 0.04;
  return v;
}

}  // namespace

Scenario generate_xb_scenario(std::uint64_t seed, const XbParams& params,
                              std::vector<XbGeometryCheck>* checks) {
  std::mt19937_64 rng(seed);
  auto jitter = [&](double r) { return (2.0 * uniform(rng) - 1.0) * r; };
  Layout l;
  l.node("bc", 0, 30, NodeKind::border_crossing, "A");
  l.node("exA", -40, 0, NodeKind::exchange_office, "A");
  l.node("exB", 40, 0, NodeKind::exchange_office, "B");
  l.node("m", 0, 0, NodeKind::junction, "A");
  l.road("exA", "m", 100.0, 1.0);
  l.road("m", "exB", 100.0, 1.0);
  for (const std::string side : {"A", "B"}) {
    const double sx = side == "A" ? -1.0 : 1.0;
    const std::string h = "h" + side, g = "g" + side, ex = "ex" + side;
    l.node(h, 6 * sx, 30, NodeKind::junction, side);
    l.node(g, 44 * sx, -4, NodeKind::junction, side);
    l.node("d" + side, 9 * sx, 28, NodeKind::depot, side);
    l.node("o" + side, 41 * sx, 1, NodeKind::depot, side);
    l.road(h, "bc", 60.0, 1.0);
    l.road("d" + side, h, 50.0);
    l.road(h, ex, 70.0, 1.02);
    l.road(g, ex, 50.0);
    l.road("o" + side, ex, 40.0);
    for (int i = 1; i <= 4; ++i) {
      const std::string c = "c" + side + std::to_string(i);
      l.node(c, 6 * sx + jitter(2.0), 30 + jitter(2.0), NodeKind::customer, side);
      l.road(c, h, 40.0, 1.2);
      const std::string k = "i" + side + std::to_string(i);
      l.node(k, 44 * sx + jitter(2.0), -4 + jitter(2.0), NodeKind::customer, side);
      l.road(k, g, 40.0, 1.2);
    }
  }

  Scenario sc;
  sc.seed = seed;
  sc.day_start = 8 * 3600.0;
  sc.day_end = 20 * 3600.0;
  sc.graph_doc = {{"nodes", l.nodes}, {"edges", l.edges}};
  sc.graph = std::make_shared<RoadGraph>(build_graph(sc.graph_doc));
  for (const auto& [id, depot] : std::vector<std::pair<std::string, std::string>>{
           {"vA1", "dA"}, {"vA2", "dA"}, {"vB1", "dB"}, {"vB2", "dB"}, {"wA1", "oA"}, {"wB1", "oB"}}) {
    sc.fleet[id] = van(id, depot, sc.day_start, sc.day_end);
  }
  Vehicle lh = van("lh", "exA", sc.day_start + 3 * 3600.0, sc.day_end);
  lh.fixed_route = true;
  lh.capacity_units = 12;
  lh.cost_per_km = 1.1;
  lh.fixed_cost = 60.0;
  lh.fuel_base_l_per_km = 0.2;
  lh.fuel_load_coeff_l_per_km = 0.1;
  sc.fleet[lh.id] = lh;
  sc.linehaul_vehicle = lh.id;

  auto parcel = [&](const std::string& id, const std::string& from, const std::string& to) {
    Order o;
    o.id = id;
    o.size_units = 1 + static_cast<int>(rng() % 2);
    o.pickup = from + std::to_string(1 + rng() % 4);
    o.delivery = to + std::to_string(1 + rng() % 4);
    o.announce_time = sc.day_start;
    o.sla_deadline = sc.day_start + 8 * 3600.0;
    sc.orders.push_back(o);
  };
  for (std::size_t i = 0; i < params.near; ++i) {
    const bool east = i % 2 == 0;
    parcel("n" + std::to_string(i + 1), east ? "cA" : "cB", east ? "cB" : "cA");
  }
  for (std::size_t i = 0; i < params.inland; ++i) {
    const bool east = i % 2 == 0;
    parcel("i" + std::to_string(i + 1), east ? "iA" : "iB", east ? "iB" : "iA");
  }

  sc.monitored = {{"border", "dA", "dB"}, {"corridor", "exA", "exB"}};
  sc.noise = {params.miss_probability, params.demand_rate_per_hour};
  sc.knobs.weights.w_dist = 1.0;
  sc.knobs.weights.w_time = 0.0;
  sc.knobs.weights.w_late = 2.0;
  sc.knobs.weights.w_vehicle = 25.0;
  sc.knobs.weights.w_unassigned = 1e4;
  sc.knobs.alpha = 1.0;
  sc.knobs.seed = seed;

  // Verify the constructed geometry before handing the scenario out.
  FreeFlow free;
  TravelModel travel(*sc.graph, free, sc.day_start);
  auto km = [&](const std::string& a, const std::string& b) {
    return travel.leg(a, b).distance_m / 1000.0;
  };
  for (const auto& o : sc.orders) {
    const bool east = sc.graph->node(o.pickup).country == "A";
    const std::string origin = east ? "exA" : "exB", destination = east ? "exB" : "exA";
    XbGeometryCheck c{o.id, o.id[0] == 'n', km(o.pickup, "bc") + km("bc", o.delivery),
                      km(o.pickup, origin) + km(origin, destination) + km(destination, o.delivery)};
    if (c.near != (c.direct_km < c.chain_km)) {
      throw Error(ErrorCode::internal, "generated geometry does not separate parcel '" + o.id + "'",
                  o.id);
    }
    if (checks) checks->push_back(c);
  }
  validate_scenario(sc);
  return sc;
}

}  // namespace coglo
