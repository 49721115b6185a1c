#include "solver.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace coglo::detail {

namespace {

double dwell(const Stop& s) { return s.service_time_s + s.slack_s; }

bool terminal(OrderState s) { return s == OrderState::delivered || s == OrderState::failed; }

// Relative tolerance for "strictly better" comparisons between costs.
bool better(double candidate, double incumbent) {
  if (!std::isfinite(incumbent)) return std::isfinite(candidate);
  return candidate < incumbent - 1e-9 * std::max(1.0, std::abs(incumbent));
}

}  // namespace

Solver::Solver(const CvrpInstance& instance, const ObjectiveWeights& weights, const Plan& base,
               const std::vector<Order>& extra)
    : instance_(instance), w_(weights), orders_(instance.orders), base_(base) {
  for (const auto& o : extra) orders_[o.id] = o;
  auto participating = [&](const std::string& id) -> const Vehicle* {
    auto it = instance_.vehicles.find(id);
    if (it == instance_.vehicles.end()) return nullptr;
    if (it->second.status == VehicleStatus::broken || it->second.fixed_route) return nullptr;
    return &it->second;
  };

  auto job_for = [&](const std::string& id) -> int {
    if (auto it = job_ix_.find(id); it != job_ix_.end()) return it->second;
    auto oit = orders_.find(id);
    if (oit == orders_.end()) {
      throw Error(ErrorCode::validation, "plan references unknown order '" + id + "'", id);
    }
    const Order& o = oit->second;
    Job j;
    j.order = id;
    j.size = o.size_units;
    j.pickup = compact(o.pickup);
    j.delivery = compact(o.delivery);
    j.due = o.due();
    if (o.ready_time) j.ready = *o.ready_time;
    j.pickup_stop = make_stop(o, true);
    j.delivery_stop = make_stop(o, false);
    jobs_.push_back(std::move(j));
    job_ix_.emplace(id, static_cast<int>(jobs_.size() - 1));
    return static_cast<int>(jobs_.size() - 1);
  };

  auto add_slot = [&](const Vehicle& vehicle, const Route* route, int route_index) {
    const int slot_index = static_cast<int>(slots_.size());
    Slot slot;
    slot.vehicle = &vehicle;
    const Route fallback = empty_route(vehicle);
    const auto& stops = route ? route->stops : fallback.stops;
    if (stops.empty() || stops.front().action != StopAction::depot_start) {
      throw Error(ErrorCode::validation,
                  "route of '" + vehicle.id + "' must begin with depot_start", vehicle.id);
    }
    RouteLock lock;
    if (auto it = instance_.locks.find(vehicle.id); it != instance_.locks.end()) lock = it->second;
    const std::size_t fixed = std::min(lock.fixed, stops.size());
    if (fixed == 0) {
      slot.prefix = {stops.front()};
      slot.frozen = 0;
    } else {
      slot.prefix.assign(stops.begin(), stops.begin() + static_cast<std::ptrdiff_t>(fixed));
      slot.frozen = fixed;
    }
    slot.closed = slot.prefix.back().action == StopAction::depot_end;
    for (const auto& s : slot.prefix) compact(s.node);
    slot.depot = compact(vehicle.home_depot);

    // Parcels aboard after the prefix are bound to this vehicle.
    std::vector<std::string> picked;
    std::set<std::string> unloaded;
    for (const auto& s : slot.prefix) {
      if (s.voided) continue;
      for (const auto& id : s.orders) {
        if (s.action == StopAction::pickup) picked.push_back(id);
        if (s.unloads()) unloaded.insert(id);
      }
    }
    for (const auto& id : picked) {
      if (unloaded.count(id)) continue;
      auto oit = orders_.find(id);
      if (oit != orders_.end() && terminal(oit->second.state)) continue;
      const int j = job_for(id);
      jobs_[j].prefix_slot = slot_index;
    }

    if (!slot.closed) {
      const std::size_t body_begin = slot.prefix.size();
      const std::size_t body_end = stops.size() - (stops.back().action == StopAction::depot_end &&
                                                           stops.size() > body_begin
                                                       ? 1
                                                       : 0);
      for (std::size_t i = body_begin; i < body_end; ++i) {
        const Stop& s = stops[i];
        if (s.voided || !s.is_order_stop()) continue;
        for (const auto& id : s.orders) {
          const int j = job_for(id);
          Stop tmpl = s;
          tmpl.orders = {id};
          tmpl.eta.reset();
          tmpl.voided = false;
          const bool pickup = s.action == StopAction::pickup;
          (pickup ? jobs_[j].pickup_stop : jobs_[j].delivery_stop) = tmpl;
          slot.visits.push_back({j, pickup});
          jobs_[j].slot = slot_index;
          if (i < lock.committed) ++slot.head;
        }
      }
    }
    slots_.push_back(std::move(slot));
    slot_route_.push_back(route_index);
  };

  std::set<std::string> routed;
  for (std::size_t r = 0; r < base_.routes.size(); ++r) {
    const Route& route = base_.routes[r];
    routed.insert(route.vehicle);
    if (const Vehicle* v = participating(route.vehicle)) {
      add_slot(*v, &route, static_cast<int>(r));
    } else {
      for (const auto& s : route.stops) compact(s.node);
    }
  }
  for (const auto& [id, vehicle] : instance_.vehicles) {
    if (!routed.count(id) && participating(id)) add_slot(vehicle, nullptr, -1);
  }
  for (const auto& id : base_.unassigned) {
    auto oit = orders_.find(id);
    if (oit == orders_.end()) {
      throw Error(ErrorCode::validation, "unassigned list references unknown order '" + id + "'",
                  id);
    }
    if (terminal(oit->second.state) || job_ix_.count(id)) continue;
    job_for(id);
  }
  for (const auto& o : extra) {
    if (!job_ix_.count(o.id)) job_for(o.id);
  }
  for (const auto& [id, v] : instance_.vehicles) compact(v.home_depot);

  build_matrices();

  const double t0 = instance_.t0;
  for (auto& slot : slots_) {
    const Stop& first = slot.prefix.front();
    const Stop& last = slot.prefix.back();
    if (slot.frozen == 0) {
      slot.start_time = std::max(t0, slot.vehicle->shift_start);
      slot.anchor_depart = slot.start_time + dwell(first);
    } else {
      slot.start_time = first.eta.value_or(t0);
      slot.anchor_depart = std::max(last.eta.value_or(t0) + dwell(last), t0);
    }
    slot.anchor = node_ix_.at(last.node);
    Route prefix_route{slot.vehicle->id, slot.prefix};
    slot.anchor_load = running_loads(prefix_route, orders_).back();
    for (std::size_t i = 1; i < slot.prefix.size(); ++i) {
      slot.const_km += D(node_ix_.at(slot.prefix[i - 1].node), node_ix_.at(slot.prefix[i].node));
    }
    for (const auto& s : slot.prefix) {
      if (s.is_order_stop()) slot.const_used = true;
      if (s.voided || !s.unloads() || !s.eta) continue;
      for (const auto& id : s.orders) {
        auto oit = orders_.find(id);
        if (oit == orders_.end()) continue;
        slot.const_late += std::max(0.0, (*s.eta - oit->second.due()) / 60.0);
      }
    }
    slot.closed_end = last.eta.value_or(slot.start_time);
  }
}

int Solver::compact(const std::string& node) {
  if (auto it = node_ix_.find(node); it != node_ix_.end()) return it->second;
  instance_.graph().node_index(node);  // throws not_found
  nodes_.push_back(node);
  node_ix_.emplace(node, static_cast<int>(nodes_.size() - 1));
  return static_cast<int>(nodes_.size() - 1);
}

Stop Solver::make_stop(const Order& order, bool pickup) const {
  Stop s;
  s.node = pickup ? order.pickup : order.delivery;
  const NodeKind kind = instance_.graph().node(s.node).kind;
  s.action = pickup ? StopAction::pickup
             : kind == NodeKind::exchange_office ? StopAction::exchange_handover
                                                 : StopAction::delivery;
  s.orders = {order.id};
  s.service_time_s = instance_.service_time_s;
  s.slack_s = instance_.buffers.alpha * instance_.buffers.stats.miss(kind) * s.service_time_s;
  return s;
}

void Solver::build_matrices() {
  const std::size_t n = nodes_.size();
  time_.assign(n * n, kUnreachable);
  dist_.assign(n * n, kUnreachable);
  TravelModel& travel = *instance_.travel;
  const RoadGraph& graph = instance_.graph();
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t ga = graph.node_index(nodes_[a]);
    for (std::size_t b = 0; b < n; ++b) {
      const auto leg = travel.leg(ga, graph.node_index(nodes_[b]));
      time_[a * n + b] = leg.time_s;
      dist_[a * n + b] = leg.distance_m / 1000.0;
    }
  }
}

std::optional<int> Solver::job_of(std::string_view order) const {
  auto it = job_ix_.find(std::string(order));
  if (it == job_ix_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Solver::slot_of(std::string_view vehicle) const {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s].vehicle->id == vehicle) return static_cast<int>(s);
  }
  return std::nullopt;
}

Solver::State Solver::start(const Slot& slot) const {
  return {slot.anchor_depart, slot.anchor, slot.anchor_load, slot.const_km, slot.const_late};
}

bool Solver::step(const Slot& slot, State& s, const Visit& v) const {
  const Job& j = jobs_[v.job];
  const int node = v.pickup ? j.pickup : j.delivery;
  const double tt = T(s.node, node);
  if (!std::isfinite(tt)) return false;
  s.t += tt;
  s.km += D(s.node, node);
  s.node = node;
  if (v.pickup) {
    s.t = std::max(s.t, j.ready);
    s.load += j.size;
    if (s.load > slot.vehicle->capacity_units) return false;
    s.t += dwell(j.pickup_stop);
  } else {
    s.load -= j.size;
    s.late += std::max(0.0, (s.t - j.due) / 60.0);
    s.t += dwell(j.delivery_stop);
  }
  return true;
}

double Solver::finish(const Slot& slot, const State& s, bool used, bool* ok) const {
  const double tt = T(s.node, slot.depot);
  const double end = s.t + tt;
  *ok = std::isfinite(end) && end <= slot.vehicle->shift_end;
  if (!*ok) return kUnreachable;
  const double km = s.km + D(s.node, slot.depot);
  return w_.w_dist * km + w_.w_time * (end - slot.start_time) / 3600.0 + w_.w_late * s.late +
         (used ? w_.w_vehicle : 0.0);
}

Eval Solver::evaluate(const Slot& slot, const std::vector<Visit>& visits) const {
  if (slot.closed) {
    if (!visits.empty()) return {false, kUnreachable, 0};
    const double cost = w_.w_dist * slot.const_km +
                        w_.w_time * (slot.closed_end - slot.start_time) / 3600.0 +
                        w_.w_late * slot.const_late + (slot.const_used ? w_.w_vehicle : 0.0);
    return {std::isfinite(cost), cost, 0};
  }
  std::vector<char> seen(jobs_.size(), 0);
  State s = start(slot);
  for (std::size_t i = 0; i < visits.size(); ++i) {
    const Visit& v = visits[i];
    if (v.pickup) {
      seen[v.job] = 1;
    } else if (jobs_[v.job].prefix_slot < 0 && !seen[v.job]) {
      return {false, kUnreachable, i};
    }
    if (!step(slot, s, v)) return {false, kUnreachable, i};
  }
  bool ok = false;
  const double cost = finish(slot, s, slot.const_used || !visits.empty(), &ok);
  return {ok, cost, visits.size()};
}

double Solver::unplaced_cost() const {
  double total = 0.0;
  for (const auto& j : jobs_) {
    if (j.slot < 0) total += w_.w_unassigned;
  }
  return total;
}

double Solver::total_cost() const {
  double total = unplaced_cost();
  for (std::size_t s = 0; s < slots_.size(); ++s) total += evaluate(static_cast<int>(s)).cost;
  return total;
}

bool Solver::feasible() const {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (!evaluate(static_cast<int>(s)).feasible) return false;
  }
  return true;
}

InsertionChoice Solver::best_insertion(int job, int slot_index,
                                       const std::vector<Visit>& visits,
                                       double base_cost) const {
  InsertionChoice best;
  const Slot& slot = slots_[slot_index];
  const Job& j = jobs_[job];
  if (slot.closed) return best;
  const bool bound = j.prefix_slot >= 0;
  if (bound && j.prefix_slot != slot_index) return best;

  const std::size_t n = visits.size();
  const std::size_t head = std::min(slot.head, n);
  std::vector<State> pre(n + 1);
  pre[0] = start(slot);
  std::size_t limit = n;  // last index with a valid state
  for (std::size_t i = 0; i < n; ++i) {
    pre[i + 1] = pre[i];
    if (!step(slot, pre[i + 1], visits[i])) {
      limit = i;
      break;
    }
  }

  auto complete = [&](State s, std::size_t from) -> double {
    for (std::size_t r = from; r < n; ++r) {
      if (!step(slot, s, visits[r])) return kUnreachable;
    }
    bool ok = false;
    const double cost = finish(slot, s, true, &ok);
    return ok ? cost : kUnreachable;
  };

  const Visit pv{job, true};
  const Visit dv{job, false};
  if (bound) {
    for (std::size_t k = head; k <= limit; ++k) {
      State s = pre[k];
      if (!step(slot, s, dv)) continue;
      const double cost = complete(s, k);
      if (!std::isfinite(cost)) continue;
      const double delta = cost - base_cost;
      if (better(delta, best.delta)) best = {delta, 0, k};
    }
    return best;
  }
  for (std::size_t i = head; i <= limit; ++i) {
    State sp = pre[i];
    if (!step(slot, sp, pv)) continue;
    for (std::size_t k = i; k <= n; ++k) {
      State s = sp;
      if (step(slot, s, dv)) {
        const double cost = complete(s, k);
        if (std::isfinite(cost)) {
          const double delta = cost - base_cost;
          if (better(delta, best.delta)) best = {delta, i, k + 1};
        }
      }
      if (k < n && !step(slot, sp, visits[k])) break;
    }
  }
  return best;
}

InsertionChoice Solver::best_insertion(int job, int slot) const {
  const Eval base = evaluate(slot);
  if (!base.feasible) return {};
  return best_insertion(job, slot, slots_[slot].visits, base.cost);
}

void Solver::insert(int job, int slot_index, const InsertionChoice& choice) {
  Slot& slot = slots_[slot_index];
  Job& j = jobs_[job];
  if (j.prefix_slot >= 0) {
    slot.visits.insert(slot.visits.begin() + static_cast<std::ptrdiff_t>(choice.delivery_at),
                       Visit{job, false});
  } else {
    slot.visits.insert(slot.visits.begin() + static_cast<std::ptrdiff_t>(choice.pickup_at),
                       Visit{job, true});
    slot.visits.insert(slot.visits.begin() + static_cast<std::ptrdiff_t>(choice.delivery_at),
                       Visit{job, false});
  }
  j.slot = slot_index;
}

void Solver::remove(int job) {
  Job& j = jobs_[job];
  if (j.slot < 0) return;
  Slot& slot = slots_[j.slot];
  std::vector<Visit> kept;
  std::size_t head = slot.head;
  for (std::size_t i = 0; i < slot.visits.size(); ++i) {
    if (slot.visits[i].job == job) {
      if (i < slot.head) --head;
    } else {
      kept.push_back(slot.visits[i]);
    }
  }
  slot.visits = std::move(kept);
  slot.head = head;
  j.slot = -1;
}

std::vector<Visit> Solver::without(const std::vector<Visit>& visits, int job) const {
  std::vector<Visit> out;
  out.reserve(visits.size());
  for (const auto& v : visits) {
    if (v.job != job) out.push_back(v);
  }
  return out;
}

bool Solver::movable(int job) const {
  const Job& j = jobs_[job];
  if (j.slot < 0) return false;
  const Slot& slot = slots_[j.slot];
  for (std::size_t i = 0; i < slot.head && i < slot.visits.size(); ++i) {
    if (slot.visits[i].job == job) return false;
  }
  return true;
}

bool Solver::allowed(int slot, const std::set<int>* slots) const {
  return !slots || slots->count(slot);
}

void Solver::strip_free(const std::set<int>* slots) {
  for (std::size_t j = 0; j < jobs_.size(); ++j) {
    const int job = static_cast<int>(j);
    if (jobs_[j].slot >= 0 && allowed(jobs_[j].slot, slots) && movable(job)) remove(job);
  }
}

bool Solver::repair(int slot_index) {
  while (true) {
    const Eval e = evaluate(slot_index);
    if (e.feasible) return true;
    const Slot& slot = slots_[slot_index];
    if (slot.visits.empty()) return false;
    const std::size_t upto = std::min(e.fail_at, slot.visits.size() - 1);
    int victim = -1;
    for (std::size_t i = upto + 1; i-- > 0;) {
      if (movable(slot.visits[i].job)) {
        victim = slot.visits[i].job;
        break;
      }
    }
    if (victim < 0) victim = slot.visits[upto].job;
    const std::size_t before = slot.visits.size();
    remove(victim);
    if (slots_[slot_index].visits.size() == before) return false;
  }
}

void Solver::construct(std::uint64_t seed, const std::set<int>* slots) {
  const std::size_t nj = jobs_.size();
  const std::size_t ns = slots_.size();
  std::vector<std::size_t> rank(nj);
  std::iota(rank.begin(), rank.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rank.begin(), rank.end(), rng);

  std::vector<InsertionChoice> cache(nj * ns);
  std::vector<char> fresh(nj * ns, 0);
  std::vector<double> base(ns);
  std::vector<char> base_ok(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const Eval e = evaluate(static_cast<int>(s));
    base[s] = e.cost;
    base_ok[s] = e.feasible;
  }

  std::vector<int> pending;
  for (std::size_t j = 0; j < nj; ++j) {
    if (jobs_[j].slot < 0) pending.push_back(static_cast<int>(j));
  }

  while (!pending.empty()) {
    int pick = -1;
    int pick_slot = -1;
    double pick_regret = -kUnreachable;
    double pick_delta = kUnreachable;
    std::vector<int> give_up;
    for (const int j : pending) {
      double best1 = kUnreachable;
      double best2 = kUnreachable;
      int best_slot = -1;
      for (std::size_t s = 0; s < ns; ++s) {
        if (!allowed(static_cast<int>(s), slots) || !base_ok[s]) continue;
        const std::size_t key = static_cast<std::size_t>(j) * ns + s;
        if (!fresh[key]) {
          cache[key] = best_insertion(j, static_cast<int>(s), slots_[s].visits, base[s]);
          fresh[key] = 1;
        }
        const double d = cache[key].delta;
        if (better(d, best1)) {
          best2 = best1;
          best1 = d;
          best_slot = static_cast<int>(s);
        } else if (d < best2) {
          best2 = d;
        }
      }
      if (best_slot < 0 || best1 >= w_.w_unassigned) {
        give_up.push_back(j);
        continue;
      }
      const double regret = std::min(best2, w_.w_unassigned) - best1;
      const bool wins = pick < 0 || better(pick_regret, regret) ||
                        (!better(regret, pick_regret) &&
                         (better(best1, pick_delta) ||
                          (!better(pick_delta, best1) && rank[j] < rank[pick])));
      if (wins) {
        pick = j;
        pick_slot = best_slot;
        pick_regret = regret;
        pick_delta = best1;
      }
    }
    for (const int j : give_up) std::erase(pending, j);
    if (pick < 0) break;
    insert(pick, pick_slot, cache[static_cast<std::size_t>(pick) * ns + pick_slot]);
    std::erase(pending, pick);
    const Eval e = evaluate(pick_slot);
    base[pick_slot] = e.cost;
    base_ok[pick_slot] = e.feasible;
    for (std::size_t j = 0; j < nj; ++j) fresh[j * ns + pick_slot] = 0;
  }
}

namespace {

// After reversing visits [i, k], orders with both visits inside the segment
// have their delivery first; swapping the two visits restores precedence.
bool pair_ordered(std::vector<Visit>& visits, std::size_t i, std::size_t k) {
  bool changed = false;
  for (std::size_t a = i; a <= k; ++a) {
    if (visits[a].pickup) continue;
    for (std::size_t b = a + 1; b <= k; ++b) {
      if (visits[b].job == visits[a].job && visits[b].pickup) {
        std::swap(visits[a], visits[b]);
        changed = true;
        break;
      }
    }
  }
  return changed;
}

}  // namespace

std::size_t Solver::improve(const ImproveBudget& budget, const std::set<int>* slots) {
  using Clock = std::chrono::steady_clock;
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(std::max(0.0, budget.max_seconds)));
  const std::size_t ns = slots_.size();
  const std::size_t nj = jobs_.size();
  std::size_t applied = 0;

  enum class Kind { none, relocate, swap, two_opt, reinsert };
  while (applied < budget.max_iterations && Clock::now() < deadline) {
    std::vector<double> cost(ns);
    for (std::size_t s = 0; s < ns; ++s) cost[s] = evaluate(static_cast<int>(s)).cost;

    Kind kind = Kind::none;
    double best = 0.0;
    int a = -1, b = -1, ta = -1, tb = -1;
    InsertionChoice ca, cb;
    std::vector<Visit> reversed;

    auto consider = [&](double delta) { return delta < best - 1e-7; };

    // Relocate one order pair.
    for (std::size_t j = 0; j < nj; ++j) {
      const int job = static_cast<int>(j);
      const int s = jobs_[j].slot;
      if (s < 0 || !allowed(s, slots) || !movable(job)) continue;
      const auto rest = without(slots_[s].visits, job);
      const Eval er = evaluate(slots_[s], rest);
      if (!er.feasible) continue;
      for (std::size_t t = 0; t < ns; ++t) {
        const int ti = static_cast<int>(t);
        if (!allowed(ti, slots)) continue;
        if (jobs_[j].prefix_slot >= 0 && jobs_[j].prefix_slot != ti) continue;
        InsertionChoice ch = ti == s ? best_insertion(job, ti, rest, er.cost)
                                     : best_insertion(job, ti, slots_[t].visits, cost[t]);
        if (!ch.found()) continue;
        const double delta = er.cost - cost[s] + ch.delta;
        if (consider(delta)) {
          best = delta;
          kind = Kind::relocate;
          a = job;
          ta = ti;
          ca = ch;
        }
      }
    }

    // Swap two order pairs across routes.
    for (std::size_t j = 0; j < nj; ++j) {
      const int ja = static_cast<int>(j);
      const int s = jobs_[j].slot;
      if (s < 0 || jobs_[j].prefix_slot >= 0 || !allowed(s, slots) || !movable(ja)) continue;
      const auto rest_s = without(slots_[s].visits, ja);
      const Eval es = evaluate(slots_[s], rest_s);
      if (!es.feasible) continue;
      for (std::size_t k = j + 1; k < nj; ++k) {
        const int jb = static_cast<int>(k);
        const int t = jobs_[k].slot;
        if (t < 0 || t == s || jobs_[k].prefix_slot >= 0 || !allowed(t, slots) ||
            !movable(jb)) {
          continue;
        }
        const auto rest_t = without(slots_[t].visits, jb);
        const Eval et = evaluate(slots_[t], rest_t);
        if (!et.feasible) continue;
        const InsertionChoice into_s = best_insertion(jb, s, rest_s, es.cost);
        if (!into_s.found()) continue;
        const InsertionChoice into_t = best_insertion(ja, t, rest_t, et.cost);
        if (!into_t.found()) continue;
        const double delta =
            es.cost + into_s.delta + et.cost + into_t.delta - cost[s] - cost[t];
        if (consider(delta)) {
          best = delta;
          kind = Kind::swap;
          a = ja;
          b = jb;
          ta = s;
          tb = t;
          ca = into_t;  // a goes to t
          cb = into_s;  // b goes to s
        }
      }
    }

    // Intra-route 2-opt over the free suffix.
    for (std::size_t s = 0; s < ns; ++s) {
      const int si = static_cast<int>(s);
      if (!allowed(si, slots)) continue;
      const auto& visits = slots_[s].visits;
      const std::size_t head = std::min(slots_[s].head, visits.size());
      for (std::size_t i = head; i + 1 < visits.size(); ++i) {
        for (std::size_t k = i + 1; k < visits.size(); ++k) {
          std::vector<Visit> cand = visits;
          std::reverse(cand.begin() + static_cast<std::ptrdiff_t>(i),
                       cand.begin() + static_cast<std::ptrdiff_t>(k) + 1);
          for (const bool keep_pairs : {false, true}) {
            if (keep_pairs && !pair_ordered(cand, i, k)) break;
            const Eval e = evaluate(slots_[s], cand);
            if (!e.feasible) continue;
            const double delta = e.cost - cost[s];
            if (consider(delta)) {
              best = delta;
              kind = Kind::two_opt;
              ta = si;
              reversed = cand;
            }
          }
        }
      }
    }

    // Reinsert an unassigned order.
    for (std::size_t j = 0; j < nj; ++j) {
      if (jobs_[j].slot >= 0) continue;
      const int job = static_cast<int>(j);
      for (std::size_t t = 0; t < ns; ++t) {
        const int ti = static_cast<int>(t);
        if (!allowed(ti, slots)) continue;
        if (!std::isfinite(cost[t])) continue;
        const InsertionChoice ch = best_insertion(job, ti, slots_[t].visits, cost[t]);
        if (!ch.found()) continue;
        const double delta = ch.delta - w_.w_unassigned;
        if (consider(delta)) {
          best = delta;
          kind = Kind::reinsert;
          a = job;
          ta = ti;
          ca = ch;
        }
      }
    }

    switch (kind) {
      case Kind::none: return applied;
      case Kind::relocate:
      case Kind::reinsert:
        remove(a);
        insert(a, ta, ca);
        break;
      case Kind::swap:
        remove(a);
        remove(b);
        insert(b, ta, cb);
        insert(a, tb, ca);
        break;
      case Kind::two_opt: slots_[ta].visits = std::move(reversed); break;
    }
    ++applied;
  }
  return applied;
}

Plan Solver::materialize() const {
  Plan plan;
  TravelModel& travel = *instance_.travel;
  const Seconds t0 = instance_.t0;

  auto build = [&](const Slot& slot) {
    Route r{slot.vehicle->id, slot.prefix};
    if (!slot.closed) {
      for (const auto& v : slot.visits) {
        const Job& j = jobs_[v.job];
        r.stops.push_back(v.pickup ? j.pickup_stop : j.delivery_stop);
      }
      r.stops.push_back(
          {slot.vehicle->home_depot, StopAction::depot_end, {}, std::nullopt, 0.0, 0.0});
    }
    compute_etas(r, *slot.vehicle, travel, t0, &orders_, slot.frozen);
    return r;
  };

  std::vector<int> slot_for_route(base_.routes.size(), -1);
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slot_route_[s] >= 0) slot_for_route[slot_route_[s]] = static_cast<int>(s);
  }
  for (std::size_t r = 0; r < base_.routes.size(); ++r) {
    if (slot_for_route[r] >= 0) {
      plan.routes.push_back(build(slots_[slot_for_route[r]]));
      continue;
    }
    Route copy = base_.routes[r];
    auto vit = instance_.vehicles.find(copy.vehicle);
    if (vit != instance_.vehicles.end()) {
      RouteLock lock;
      if (auto it = instance_.locks.find(copy.vehicle); it != instance_.locks.end()) {
        lock = it->second;
      }
      compute_etas(copy, vit->second, travel, t0, &orders_, lock.fixed);
    }
    plan.routes.push_back(std::move(copy));
  }
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slot_route_[s] < 0) plan.routes.push_back(build(slots_[s]));
  }
  for (const auto& j : jobs_) {
    if (j.slot < 0 && j.prefix_slot < 0) plan.unassigned.push_back(j.order);
  }
  std::sort(plan.unassigned.begin(), plan.unassigned.end());
  plan.objective = objective(plan, w_, travel, orders_);
  return plan;
}

void Solver::solve_exact() {
  const std::size_t nj = jobs_.size();
  const std::size_t ns = slots_.size();
  for (const auto& s : slots_) {
    if (!s.visits.empty() || s.prefix.size() != 1 || s.frozen != 0) {
      throw Error(ErrorCode::internal, "exact solver needs a fresh instance");
    }
  }
  for (const auto& j : jobs_) {
    if (j.prefix_slot >= 0) throw Error(ErrorCode::internal, "exact solver needs a fresh instance");
  }
  if (ns == 0) return;

  // Cheapest way to arrive at each visit from any other visit or depot.
  auto arrive_cost = [&](int node, int self_job, bool self_pickup, double dw) {
    double best = kUnreachable;
    auto consider = [&](int from) {
      const double t = T(from, node);
      if (!std::isfinite(t)) return;
      best = std::min(best, w_.w_dist * D(from, node) + w_.w_time * t / 3600.0);
    };
    for (const auto& s : slots_) consider(s.anchor);
    for (std::size_t k = 0; k < nj; ++k) {
      const int kk = static_cast<int>(k);
      if (!(kk == self_job && self_pickup)) consider(jobs_[k].pickup);
      if (!(kk == self_job && !self_pickup)) consider(jobs_[k].delivery);
    }
    return best + w_.w_time * dw / 3600.0;
  };
  std::vector<double> lb_onboard(nj), lb_open(nj);
  for (std::size_t k = 0; k < nj; ++k) {
    const Job& j = jobs_[k];
    const int kk = static_cast<int>(k);
    lb_onboard[k] = arrive_cost(j.delivery, kk, false, dwell(j.delivery_stop));
    lb_open[k] = std::min(w_.w_unassigned,
                          arrive_cost(j.pickup, kk, true, dwell(j.pickup_stop)) + lb_onboard[k]);
  }

  struct Frame {
    int v;
    State s;
    bool used;
    std::uint32_t started;
    std::uint32_t done;
    int last;
    double closed;
  };

  const std::uint32_t all = nj >= 32 ? 0xffffffffu : ((1u << nj) - 1u);
  double best = kUnreachable;
  std::vector<std::vector<Visit>> current(ns), best_routes(ns);
  std::unordered_map<std::uint64_t, std::vector<std::pair<double, double>>> memo;

  auto dominated = [&](const Frame& f, double partial) {
    const std::uint64_t key = static_cast<std::uint64_t>(f.started) |
                              (static_cast<std::uint64_t>(f.done) << 8) |
                              (static_cast<std::uint64_t>(f.last + 1) << 16) |
                              (static_cast<std::uint64_t>(f.used) << 24) |
                              (static_cast<std::uint64_t>(f.v) << 25);
    auto& front = memo[key];
    for (const auto& [t, c] : front) {
      if (t <= f.s.t && c <= partial) return true;
    }
    std::erase_if(front, [&](const auto& e) { return f.s.t <= e.first && partial <= e.second; });
    front.emplace_back(f.s.t, partial);
    return false;
  };

  auto enter = [&](int v, double closed) {
    const Slot& slot = slots_[v];
    return Frame{v, start(slot), false, 0, 0, -1, closed};
  };

  auto dfs = [&](auto& self, const Frame& f) -> void {
    const Slot& slot = slots_[f.v];
    const double partial = f.closed + w_.w_dist * f.s.km +
                           w_.w_time * (f.s.t - slot.start_time) / 3600.0 +
                           w_.w_late * f.s.late + (f.used ? w_.w_vehicle : 0.0);
    double bound = partial;
    for (std::size_t k = 0; k < nj; ++k) {
      const std::uint32_t bit = 1u << k;
      if (!(f.started & bit)) {
        bound += lb_open[k];
      } else if (!(f.done & bit)) {
        bound += lb_onboard[k];
      }
    }
    if (!better(bound, best)) return;
    if (dominated(f, partial)) return;

    const std::uint32_t onboard = f.started & ~f.done;
    for (std::size_t k = 0; k < nj; ++k) {
      const std::uint32_t bit = 1u << k;
      if (f.started & bit) continue;
      Frame g = f;
      if (!step(slot, g.s, Visit{static_cast<int>(k), true})) continue;
      g.used = true;
      g.started |= bit;
      g.last = static_cast<int>(2 * k);
      current[f.v].push_back({static_cast<int>(k), true});
      self(self, g);
      current[f.v].pop_back();
    }
    for (std::size_t k = 0; k < nj; ++k) {
      const std::uint32_t bit = 1u << k;
      if (!(onboard & bit)) continue;
      Frame g = f;
      if (!step(slot, g.s, Visit{static_cast<int>(k), false})) continue;
      g.done |= bit;
      g.last = static_cast<int>(2 * k + 1);
      current[f.v].push_back({static_cast<int>(k), false});
      self(self, g);
      current[f.v].pop_back();
    }
    if (onboard != 0) return;
    bool ok = false;
    const double route_cost = finish(slot, f.s, f.used, &ok);
    if (!ok) return;
    if (static_cast<std::size_t>(f.v) + 1 < ns) {
      Frame g = enter(f.v + 1, f.closed + route_cost);
      g.started = f.started;
      g.done = f.done;
      self(self, g);
      return;
    }
    const double total =
        f.closed + route_cost + w_.w_unassigned * std::popcount(all & ~f.started);
    if (better(total, best)) {
      best = total;
      best_routes = current;
    }
  };

  dfs(dfs, enter(0, 0.0));
  if (!std::isfinite(best)) return;
  for (std::size_t s = 0; s < ns; ++s) {
    slots_[s].visits = best_routes[s];
    for (const auto& v : best_routes[s]) jobs_[v.job].slot = static_cast<int>(s);
  }
}

}  // namespace coglo::detail
