#pragma once

// Cognitive advisor: holds the world state, turns ad-hoc events into route
// recommendations at local or global scope and runs their accept/reject
// lifecycle. Every mutation is a JSON command appended to a log, so a run
// can be replayed from its initial state.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coglo/fleet.h"
#include "coglo/optimization.h"
#include "coglo/traffic.h"

namespace coglo {

enum class AdhocKind { new_order, vehicle_breakdown, traffic, missed_delivery, manual };
const char* to_string(AdhocKind kind);

struct AdhocEvent {
  AdhocKind kind = AdhocKind::manual;
  std::optional<Order> order;           // new_order
  std::string vehicle;                  // vehicle_breakdown
  std::string order_id;                 // missed_delivery
  std::optional<TrafficEvent> traffic;  // traffic, manual
  std::optional<Seconds> at;            // advances the clock when later
  std::uint64_t sequence = 0;           // assigned on ingestion

  bool operator==(const AdhocEvent&) const = default;
};

/// Wire format: {"type": "new_order", "order": {...}} |
/// {"type": "vehicle_breakdown", "vehicle": id} |
/// {"type": "traffic" | "manual", "event": {...}} |
/// {"type": "missed_delivery", "order": id}; "at" is optional on all.
nlohmann::json adhoc_to_json(const AdhocEvent& event);
AdhocEvent adhoc_from_json(const nlohmann::json& j);

/// Execution progress of one vehicle along its current route.
struct VehicleProgress {
  std::size_t fixed = 0;   // stops already reached or being driven to
  std::size_t served = 0;  // stops whose service is done

  bool operator==(const VehicleProgress&) const = default;
};

struct WorldState {
  std::shared_ptr<const RoadGraph> graph;
  std::vector<TrafficEvent> events;
  std::vector<MonitoredRoute> monitored;
  Fleet fleet;
  OrderBook orders;
  Plan plan;
  Seconds clock = 0.0;
  std::uint64_t version = 0;
  std::map<std::string, VehicleProgress> progress;
  std::map<std::string, int> attempts;  // delivery attempts per order
};

/// Everything but the graph itself, which is summarized by its size.
nlohmann::json state_to_json(const WorldState& state);

struct AdvisorConfig {
  ObjectiveWeights weights;
  double theta = 0.2;        // insertion delta, as a fraction of the objective
  std::size_t k = 2;         // affected routes that escalate a traffic event
  Seconds horizon_s = 1800;  // commitment horizon
  Seconds ttl_s = 300;
  double alpha = 0.0;
  AnticipationStats stats;
  double service_time_s = kDefaultServiceTimeS;
  ImproveBudget budget{200, 60.0};
  std::uint64_t seed = 0;
  int max_attempts = 3;
};

nlohmann::json config_to_json(const AdvisorConfig& config);
/// Missing keys keep their defaults.
AdvisorConfig config_from_json(const nlohmann::json& j);

enum class Scope { local, global };
enum class RecStatus { proposed, accepted, rejected, expired };
enum class Verdict { accept, reject };

const char* to_string(Scope scope);
const char* to_string(RecStatus status);
RecStatus rec_status_from_string(std::string_view s);
Verdict verdict_from_string(std::string_view s);

struct RouteChange {
  std::string vehicle;
  Route before;
  Route after;
};

struct Recommendation {
  std::string id;
  std::uint64_t sequence = 0;
  std::optional<AdhocEvent> trigger;  // nullopt: periodic re-optimization
  Scope scope = Scope::local;
  std::vector<RouteChange> changed_routes;
  std::vector<std::string> unassigned_added;
  std::vector<std::string> unassigned_removed;
  std::vector<std::string> failed_orders;
  double objective_before = 0.0;     // current plan, pre-event context
  double objective_no_change = 0.0;  // current plan, post-event context
  double objective_after = 0.0;
  RecStatus status = RecStatus::proposed;
  Seconds created_at = 0.0;
  Seconds ttl_s = 0.0;
  std::uint64_t base_version = 0;
  bool ephemeral = false;
  Plan plan;  // complete proposed plan

  bool no_change() const {
    return changed_routes.empty() && unassigned_added.empty() && unassigned_removed.empty() &&
           failed_orders.empty();
  }
};

nlohmann::json recommendation_to_json(const Recommendation& rec);

enum class XbMode { direct_border, via_exchange };
const char* to_string(XbMode mode);

struct XbChoice {
  XbMode mode = XbMode::via_exchange;
  Path path;
  double direct_cost = kUnreachable;
  double chain_cost = kUnreachable;
  std::optional<std::string> crossing;
  std::optional<std::string> origin_office;
  std::optional<std::string> destination_office;
};

/// Objective-equivalent cost of driving a path: w_dist·km + w_time·hours.
double path_cost(const Path& path, const ObjectiveWeights& weights);

class Advisor {
 public:
  Advisor(WorldState initial, AdvisorConfig config);

  const WorldState& state() const { return state_; }
  const AdvisorConfig& config() const { return config_; }
  const std::vector<nlohmann::json>& log() const { return log_; }
  const std::vector<Recommendation>& recommendations() const { return recs_; }
  /// Throws Error{not_found}.
  const Recommendation& recommendation(std::string_view id) const;

  /// Single mutation entry point; every public mutator goes through here.
  /// Returns the index of the recommendation produced, if any.
  std::optional<std::size_t> apply(const nlohmann::json& command);

  /// Construct, improve and buffer a plan for every open order. Error{conflict}
  /// once any vehicle has left its depot.
  const Plan& daily_orchestration();
  const Recommendation& handle_event(const AdhocEvent& event);
  const Recommendation& periodic_reoptimize();
  /// Error{not_found} unknown id, Error{conflict} already decided,
  /// Error{expired} TTL elapsed or stale and no longer valid.
  const Recommendation& decide(std::string_view id, Verdict verdict);
  void advance_clock(Seconds t);

  // Execution feedback from vehicles.
  /// Leaves the current stop at `at`, reaching the next one at `arrival`.
  void depart(std::string_view vehicle, Seconds at, Seconds arrival);
  /// Service at the stop just reached, starting at `at`.
  void serve(std::string_view vehicle, Seconds at, bool missed = false);
  void fail_order(std::string_view order);
  /// Installs the timetable of a fixed-route vehicle.
  void install_fixed_route(const Route& route);

  /// handle_event on a copy; this advisor is untouched.
  Recommendation dry_run(const AdhocEvent& event) const;
  XbChoice xb_route_choice(const Order& order) const;
  RttiSnapshot rtti() const;

  /// Locks in force at the current clock.
  std::map<std::string, RouteLock> locks() const;
  /// Problem instance at the current clock and context.
  CvrpInstance instance() const;

  static Advisor replay(WorldState initial, AdvisorConfig config,
                        const std::vector<nlohmann::json>& log);

 private:
  struct Outcome {
    std::optional<std::size_t> rec;
    std::optional<Error> deferred;  // raised after the command is logged
  };

  Outcome execute(const nlohmann::json& command);
  Outcome run_daily();
  Outcome run_event(AdhocEvent event);
  Outcome run_periodic();
  Outcome run_decide(const std::string& id, Verdict verdict);
  void run_clock(Seconds t);
  void run_depart(const std::string& vehicle, Seconds at, Seconds arrival);
  void run_serve(const std::string& vehicle, Seconds at, bool missed);
  void run_fail(const std::string& order);
  void run_fixed_route(const Route& route);

  std::shared_ptr<TravelModel> travel() const;
  Plan retimed(Plan plan, const CvrpInstance& instance) const;
  double priced(const Plan& plan, const CvrpInstance& instance) const;
  /// Drops orders from hard-infeasible routes, then reinserts what fits.
  Plan repaired(const Plan& plan, const CvrpInstance& instance, std::uint64_t seed) const;
  void install(Plan plan, const std::vector<std::string>& failed);
  void sync_states();
  void strip_broken(const std::string& vehicle);
  std::size_t propose(Recommendation rec, const Plan& current);
  std::optional<Plan> rebase(const Recommendation& rec) const;

  WorldState state_;
  AdvisorConfig config_;
  std::vector<nlohmann::json> log_;
  std::vector<Recommendation> recs_;
  std::uint64_t sequence_ = 0;
  mutable std::shared_ptr<TravelModel> travel_;
};

}  // namespace coglo
