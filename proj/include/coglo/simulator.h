#pragma once

// Discrete-event simulation of one day of operations under a routing policy,
// plus the KPIs computed from its trace.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coglo/advisor.h"

namespace coglo {

enum class Policy { static_plan, reactive, anticipatory };
const char* to_string(Policy policy);
Policy policy_from_string(std::string_view s);

struct Noise {
  double miss_probability = 0.0;
  double demand_rate_per_hour = 0.0;
};

struct ScheduledBreakdown {
  std::string vehicle;
  Seconds at = 0.0;
};

struct Scenario {
  nlohmann::json graph_doc;
  std::shared_ptr<const RoadGraph> graph;
  Fleet fleet;
  std::vector<Order> orders;
  std::vector<TrafficEvent> events;
  std::vector<ScheduledBreakdown> breakdowns;
  std::vector<MonitoredRoute> monitored;
  Noise noise;
  std::uint64_t seed = 0;
  AdvisorConfig knobs;  // weights live here
  Seconds day_start = 0.0;
  Seconds day_end = 86400.0;
  Seconds reopt_period_s = 1800.0;
  std::string linehaul_vehicle;  // fixed-route shuttle between the exchange offices
};

/// Throws Error{validation} on a malformed document or an unresolved id.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& scenario);
void validate_scenario(const Scenario& scenario);

struct TraceEntry {
  Seconds t = 0.0;
  std::uint64_t seq = 0;
  std::string kind;
  nlohmann::json payload;
};

using SimTrace = std::vector<TraceEntry>;

nlohmann::json trace_entry_to_json(const TraceEntry& entry);
TraceEntry trace_entry_from_json(const nlohmann::json& j);
/// JSON Lines, one entry per line.
std::string trace_to_jsonl(const SimTrace& trace);
SimTrace trace_from_jsonl(std::string_view text);

struct RecommendationCounts {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t expired = 0;

  bool operator==(const RecommendationCounts&) const = default;
};

struct KpiReport {
  double load_factor = 0.0;
  double total_distance_km = 0.0;
  double total_fuel_l = 0.0;
  double total_cost = 0.0;
  double on_time_rate = 0.0;
  std::size_t delivered = 0;
  std::size_t missed = 0;
  std::size_t reopt_count = 0;
  RecommendationCounts recommendations;
  std::size_t failed = 0;
  std::size_t unassigned_at_end = 0;

  bool operator==(const KpiReport&) const = default;
};

nlohmann::json kpis_to_json(const KpiReport& report);
KpiReport kpis_from_json(const nlohmann::json& j);

/// Recomputes every KPI from the trace alone.
KpiReport kpis(const SimTrace& trace, const Fleet& fleet, const ObjectiveWeights& weights);

struct SimResult {
  SimTrace trace;
  KpiReport report;
  std::size_t plans_checked = 0;
  std::vector<std::string> plan_violations;  // "<when>: <violation kind>"
  std::size_t recommendations_checked = 0;
  std::size_t worse_than_no_change = 0;
};

/// Deterministic for a given scenario (seed included) and policy.
SimResult run(const Scenario& scenario, Policy policy);

struct KpiDelta {
  std::string kpi;
  std::string category;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;                // b - a
  std::optional<double> percent;     // nullopt when a is zero
  bool higher_is_better = false;

  bool improved() const { return higher_is_better ? delta > 0.0 : delta < 0.0; }
};

struct DeltaReport {
  std::vector<KpiDelta> rows;

  const KpiDelta& row(std::string_view kpi) const;
};

DeltaReport compare(const KpiReport& a, const KpiReport& b);
nlohmann::json delta_to_json(const DeltaReport& report);
std::string delta_table(const DeltaReport& report);

struct XbParams {
  std::size_t near = 6;    // parcels between the border clusters
  std::size_t inland = 2;  // parcels between the hinterlands of the offices
  double miss_probability = 0.0;
  double demand_rate_per_hour = 0.0;
};

struct XbGeometryCheck {
  std::string order;
  bool near = false;
  double direct_km = 0.0;
  double chain_km = 0.0;
};

/// Two-country network with an exchange office inland on each side, one
/// border crossing, and customer clusters on both sides of it. Throws
/// Error{internal} when a near parcel is not shorter direct or an inland
/// parcel not shorter via the chain.
Scenario generate_xb_scenario(std::uint64_t seed, const XbParams& params,
                              std::vector<XbGeometryCheck>* checks = nullptr);

}  // namespace coglo
