#pragma once

// Road network: directed graph of typed infrastructure nodes with
// snapshot-based travel costs.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coglo/common.h"
#include "json.hpp"

namespace coglo {

enum class NodeKind {
  junction,
  depot,
  post_office,
  exchange_office,
  border_crossing,
  customer,
};

const char* to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view s);

struct Node {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  NodeKind kind = NodeKind::junction;
  std::string country;
};

struct Edge {
  std::string id;
  std::string from;
  std::string to;
  double length_m = 0.0;
  double free_flow_speed_kmh = 0.0;
  double base_travel_time_s = 0.0;
};

struct Path {
  std::vector<std::string> edge_ids;
  double total_time_s = 0.0;
  double total_distance_m = 0.0;

  bool operator==(const Path&) const = default;
};

/// Seconds needed to cover `length_m` at `speed_kmh`.
double travel_seconds(double length_m, double speed_kmh);

/// Great-circle distance in meters.
double haversine_m(double lat1, double lon1, double lat2, double lon2);

/// Immutable after build_graph(); safe for concurrent reads.
class RoadGraph {
 public:
  RoadGraph() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::optional<std::size_t> find_node(std::string_view id) const;
  std::optional<std::size_t> find_edge(std::string_view id) const;

  // Throw Error{not_found} for unknown ids.
  std::size_t node_index(std::string_view id) const;
  std::size_t edge_index(std::string_view id) const;
  const Node& node(std::string_view id) const { return nodes_[node_index(id)]; }
  const Edge& edge(std::string_view id) const { return edges_[edge_index(id)]; }

  const std::vector<std::size_t>& outgoing(std::size_t node) const { return out_[node]; }
  const std::vector<std::size_t>& incoming(std::size_t node) const { return in_[node]; }
  std::size_t edge_tail(std::size_t edge) const { return tail_[edge]; }
  std::size_t edge_head(std::size_t edge) const { return head_[edge]; }

 private:
  friend RoadGraph build_graph(const nlohmann::json& document);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> node_ix_;
  std::unordered_map<std::string, std::size_t> edge_ix_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::size_t> tail_;
  std::vector<std::size_t> head_;
};

/// Validates a graph description ({"nodes": [...], "edges": [...]}) and
/// derives base travel times. Throws Error{validation} naming the offending
/// element on dangling endpoints, duplicate ids or non-positive length/speed.
RoadGraph build_graph(const nlohmann::json& document);

nlohmann::json graph_to_json(const RoadGraph& graph);

/// Source of effective speeds. nullopt means the edge is impassable at t.
class SpeedSource {
 public:
  virtual ~SpeedSource() = default;
  virtual std::optional<double> effective_speed_kmh(std::size_t edge_index,
                                                    const Edge& edge,
                                                    Seconds t) const = 0;
};

class FreeFlow final : public SpeedSource {
 public:
  std::optional<double> effective_speed_kmh(std::size_t, const Edge& edge,
                                            Seconds) const override {
    return edge.free_flow_speed_kmh;
  }
};

/// Per-edge travel seconds frozen at t; closed edges carry kUnreachable.
std::vector<double> snapshot_edge_times(const RoadGraph& graph, Seconds t,
                                        const SpeedSource& ctx);

/// Minimum-time path under the speeds frozen at `t`. Among equal-time paths
/// the lexicographically smallest edge-id sequence wins. nullopt when `to`
/// cannot be reached. Throws Error{not_found} for unknown node ids.
std::optional<Path> shortest_path(const RoadGraph& graph, std::string_view from,
                                  std::string_view to, Seconds t,
                                  const SpeedSource& ctx);

using TravelMatrix = std::vector<std::vector<double>>;

/// Entry (i,j) is shortest_path(nodes[i], nodes[j]).total_time_s, or
/// kUnreachable.
TravelMatrix travel_time_matrix(const RoadGraph& graph,
                                const std::vector<std::string>& nodes,
                                Seconds t, const SpeedSource& ctx);

/// Memoizing travel oracle over one speed snapshot. Not thread-safe; each
/// solve owns its own instance.
class TravelModel {
 public:
  TravelModel(const RoadGraph& graph, const SpeedSource& ctx, Seconds t);
  TravelModel(const RoadGraph& graph, std::vector<double> edge_times, Seconds t);

  struct Leg {
    double time_s = kUnreachable;
    double distance_m = kUnreachable;
  };

  const RoadGraph& graph() const { return *graph_; }
  Seconds snapshot_time() const { return t_; }
  const std::vector<double>& edge_times() const { return edge_times_; }

  Leg leg(std::size_t from, std::size_t to);
  Leg leg(std::string_view from, std::string_view to);
  std::optional<Path> path(std::size_t from, std::size_t to);
  std::optional<Path> path(std::string_view from, std::string_view to);

 private:
  const std::vector<double>& tree_to(std::size_t target);

  const RoadGraph* graph_;
  std::vector<double> edge_times_;
  Seconds t_;
  std::unordered_map<std::size_t, std::vector<double>> to_target_;
  std::unordered_map<std::size_t, Leg> legs_;
};

/// GeoJSON Feature (LineString) for a path with its totals as properties.
nlohmann::json path_to_geojson(const RoadGraph& graph, const Path& path,
                               std::string_view from_node);

}  // namespace coglo
