#pragma once

// Index-based routing state shared by the public solvers and the advisor.
// Routes are split into a fixed prefix (ETAs kept), a head of order-locked
// visits and a free suffix; only the suffix is rearranged.

#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "coglo/optimization.h"

namespace coglo::detail {

struct Job {
  std::string order;
  int size = 1;
  int pickup = 0;    // compact node index
  int delivery = 0;  // compact node index
  double due = 0.0;
  double ready = -kUnreachable;
  Stop pickup_stop;    // template, eta unset
  Stop delivery_stop;  // template, eta unset
  int prefix_slot = -1;  // pickup already performed on this slot
  int slot = -1;         // slot currently holding a visit, -1 when unplaced
};

struct Visit {
  int job = 0;
  bool pickup = true;
  bool operator==(const Visit&) const = default;
};

struct Slot {
  const Vehicle* vehicle = nullptr;
  std::vector<Stop> prefix;  // never empty; starts with depot_start
  std::size_t frozen = 0;    // prefix stops keeping their ETAs (0 or prefix.size())
  bool closed = false;       // prefix already ends at depot_end
  int depot = 0;
  int anchor = 0;
  double anchor_depart = 0.0;
  double start_time = 0.0;
  int anchor_load = 0;
  double const_km = 0.0;
  double const_late = 0.0;
  bool const_used = false;
  double closed_end = 0.0;
  std::size_t head = 0;  // visits[0, head) keep their order
  std::vector<Visit> visits;
};

struct Eval {
  bool feasible = false;
  double cost = kUnreachable;
  std::size_t fail_at = 0;  // visit index where feasibility broke; visits.size() = at the end
};

struct InsertionChoice {
  double delta = kUnreachable;
  std::size_t pickup_at = 0;    // visit index in the new sequence (prefix-bound: unused)
  std::size_t delivery_at = 0;  // visit index in the new sequence
  bool found() const { return delta < kUnreachable; }
};

class Solver {
 public:
  /// Slots for every participating vehicle of `instance` (base routes first,
  /// then idle vehicles in fleet order); everything else passes through.
  /// Orders in base.unassigned become unplaced jobs; `extra` orders too.
  Solver(const CvrpInstance& instance, const ObjectiveWeights& weights, const Plan& base,
         const std::vector<Order>& extra = {});
  Solver(const Solver&) = delete;
  Solver& operator=(const Solver&) = delete;

  const std::vector<Job>& jobs() const { return jobs_; }
  const std::vector<Slot>& slots() const { return slots_; }
  std::optional<int> job_of(std::string_view order) const;
  std::optional<int> slot_of(std::string_view vehicle) const;

  Eval evaluate(const Slot& slot, const std::vector<Visit>& visits) const;
  Eval evaluate(int slot) const { return evaluate(slots_[slot], slots_[slot].visits); }
  double unplaced_cost() const;
  double total_cost() const;  // slots + unplaced; passthrough routes excluded
  bool feasible() const;

  /// Cheapest insertion of an unplaced job into `slot` given `visits` as its
  /// current sequence, scanning every position pair after the head.
  InsertionChoice best_insertion(int job, int slot, const std::vector<Visit>& visits,
                                 double base_cost) const;
  InsertionChoice best_insertion(int job, int slot) const;
  void insert(int job, int slot, const InsertionChoice& choice);
  /// Removes every non-prefix visit of the job; the job becomes unplaced.
  void remove(int job);
  /// Moves every free-suffix visit out of the slots.
  void strip_free(const std::set<int>* slots = nullptr);
  /// Drops visits until the slot is feasible. False when only locked visits
  /// remain and the slot is still infeasible.
  bool repair(int slot);
  bool movable(int job) const;

  /// Regret-2 over unplaced jobs restricted to `slots` (all when null).
  void construct(std::uint64_t seed, const std::set<int>* slots = nullptr);
  /// Best-improvement sweeps. Returns the number of applied moves.
  std::size_t improve(const ImproveBudget& budget, const std::set<int>* slots = nullptr);

  Plan materialize() const;

  /// Exhaustive branch-and-bound over all slots (fresh instance only).
  void solve_exact();

  TravelModel& travel() const { return *instance_.travel; }
  const CvrpInstance& instance() const { return instance_; }
  const OrderBook& orders() const { return orders_; }

 private:
  struct State {
    double t;
    int node;
    int load;
    double km;
    double late;
  };

  int compact(const std::string& node);
  Stop make_stop(const Order& order, bool pickup) const;
  void build_matrices();
  State start(const Slot& slot) const;
  bool step(const Slot& slot, State& s, const Visit& v) const;
  double finish(const Slot& slot, const State& s, bool used, bool* ok) const;
  bool allowed(int slot, const std::set<int>* slots) const;
  std::vector<Visit> without(const std::vector<Visit>& visits, int job) const;

  CvrpInstance instance_;
  ObjectiveWeights w_;
  OrderBook orders_;
  Plan base_;
  std::vector<Job> jobs_;
  std::vector<Slot> slots_;
  std::vector<int> slot_route_;  // base route index, -1 for appended slots
  std::vector<std::string> nodes_;
  std::unordered_map<std::string, int> node_ix_;
  std::vector<double> time_;  // nodes_ × nodes_
  std::vector<double> dist_;  // km
  std::unordered_map<std::string, int> job_ix_;

  double T(int a, int b) const { return time_[a * nodes_.size() + b]; }
  double D(int a, int b) const { return dist_[a * nodes_.size() + b]; }
};

}  // namespace coglo::detail
