#include "coglo/network.h"

#include <algorithm>
#include <functional>
#include <queue>
#include <unordered_set>

namespace coglo {

namespace {

constexpr double kEarthRadiusM = 6371008.8;
constexpr double kPi = 3.14159265358979323846;

// Relative slack used when deciding whether an edge lies on a shortest path.
constexpr double kTieEps = 1e-9;

std::string require_string(const nlohmann::json& obj, const char* key,
                           const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    throw Error(ErrorCode::validation,
                where + ": missing or non-string field '" + key + "'", where);
  }
  return obj.at(key).get<std::string>();
}

double require_number(const nlohmann::json& obj, const char* key,
                      const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_number()) {
    throw Error(ErrorCode::validation,
                where + ": missing or non-numeric field '" + key + "'", where);
  }
  return obj.at(key).get<double>();
}

// Backward Dijkstra: time-to-target for every node.
std::vector<double> times_to(const RoadGraph& graph,
                             const std::vector<double>& edge_times,
                             std::size_t target) {
  std::vector<double> dist(graph.nodes().size(), kUnreachable);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[target] = 0.0;
  queue.emplace(0.0, target);
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (std::size_t e : graph.incoming(v)) {
      const double w = edge_times[e];
      if (is_unreachable(w)) continue;
      const std::size_t u = graph.edge_tail(e);
      const double nd = w + d;
      if (nd < dist[u]) {
        dist[u] = nd;
        queue.emplace(nd, u);
      }
    }
  }
  return dist;
}

// Greedy forward walk along the shortest-path DAG, taking the smallest edge
// id at every branch. This yields the lexicographically smallest sequence.
std::optional<Path> walk(const RoadGraph& graph,
                         const std::vector<double>& edge_times,
                         const std::vector<double>& to_target,
                         std::size_t from, std::size_t to) {
  if (is_unreachable(to_target[from])) return std::nullopt;
  Path path;
  std::size_t u = from;
  while (u != to) {
    std::optional<std::size_t> best;
    const double budget = to_target[u] + kTieEps * std::max(1.0, to_target[u]);
    for (std::size_t e : graph.outgoing(u)) {
      const double w = edge_times[e];
      if (is_unreachable(w)) continue;
      const double rest = to_target[graph.edge_head(e)];
      if (is_unreachable(rest) || w + rest > budget) continue;
      if (!best || graph.edges()[e].id < graph.edges()[*best].id) best = e;
    }
    if (!best) {
      throw Error(ErrorCode::internal, "shortest path walk lost the DAG");
    }
    path.edge_ids.push_back(graph.edges()[*best].id);
    path.total_time_s += edge_times[*best];
    path.total_distance_m += graph.edges()[*best].length_m;
    u = graph.edge_head(*best);
  }
  return path;
}

}  // namespace

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::junction: return "junction";
    case NodeKind::depot: return "depot";
    case NodeKind::post_office: return "post_office";
    case NodeKind::exchange_office: return "exchange_office";
    case NodeKind::border_crossing: return "border_crossing";
    case NodeKind::customer: return "customer";
  }
  return "junction";
}

NodeKind node_kind_from_string(std::string_view s) {
  static const std::pair<std::string_view, NodeKind> kinds[] = {
      {"junction", NodeKind::junction},
      {"depot", NodeKind::depot},
      {"post_office", NodeKind::post_office},
      {"exchange_office", NodeKind::exchange_office},
      {"border_crossing", NodeKind::border_crossing},
      {"customer", NodeKind::customer},
  };
  for (const auto& [name, kind] : kinds) {
    if (name == s) return kind;
  }
  throw Error(ErrorCode::validation, "unknown node kind '" + std::string(s) + "'",
              std::string(s));
}

double travel_seconds(double length_m, double speed_kmh) {
  return length_m / (speed_kmh * 1000.0 / 3600.0);
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  const double to_rad = kPi / 180.0;
  const double dlat = (lat2 - lat1) * to_rad;
  const double dlon = (lon2 - lon1) * to_rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * to_rad) * std::cos(lat2 * to_rad) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

std::optional<std::size_t> RoadGraph::find_node(std::string_view id) const {
  auto it = node_ix_.find(std::string(id));
  if (it == node_ix_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> RoadGraph::find_edge(std::string_view id) const {
  auto it = edge_ix_.find(std::string(id));
  if (it == edge_ix_.end()) return std::nullopt;
  return it->second;
}

std::size_t RoadGraph::node_index(std::string_view id) const {
  if (auto ix = find_node(id)) return *ix;
  throw Error(ErrorCode::not_found, "unknown node '" + std::string(id) + "'",
              std::string(id));
}

std::size_t RoadGraph::edge_index(std::string_view id) const {
  if (auto ix = find_edge(id)) return *ix;
  throw Error(ErrorCode::not_found, "unknown edge '" + std::string(id) + "'",
              std::string(id));
}

RoadGraph build_graph(const nlohmann::json& document) {
  if (!document.is_object()) {
    throw Error(ErrorCode::validation, "graph description must be an object");
  }
  RoadGraph g;
  const auto empty = nlohmann::json::array();
  const auto& nodes = document.contains("nodes") ? document.at("nodes") : empty;
  const auto& edges = document.contains("edges") ? document.at("edges") : empty;
  if (!nodes.is_array() || !edges.is_array()) {
    throw Error(ErrorCode::validation, "'nodes' and 'edges' must be arrays");
  }

  for (const auto& n : nodes) {
    Node node;
    node.id = require_string(n, "id", "node");
    const std::string where = "node '" + node.id + "'";
    node.lat = require_number(n, "lat", where);
    node.lon = require_number(n, "lon", where);
    node.kind = n.contains("kind") ? node_kind_from_string(n.at("kind").get<std::string>())
                                   : NodeKind::junction;
    node.country = n.value("country", std::string{});
    if (node.lat < -90.0 || node.lat > 90.0 || node.lon < -180.0 || node.lon > 180.0) {
      throw Error(ErrorCode::validation, where + ": coordinates out of range", node.id);
    }
    if (!g.node_ix_.emplace(node.id, g.nodes_.size()).second) {
      throw Error(ErrorCode::validation, "duplicate node id '" + node.id + "'", node.id);
    }
    g.nodes_.push_back(std::move(node));
  }
  g.out_.resize(g.nodes_.size());
  g.in_.resize(g.nodes_.size());

  for (const auto& e : edges) {
    Edge edge;
    edge.id = require_string(e, "id", "edge");
    const std::string where = "edge '" + edge.id + "'";
    edge.from = require_string(e, "from", where);
    edge.to = require_string(e, "to", where);
    edge.length_m = require_number(e, "length_m", where);
    edge.free_flow_speed_kmh = require_number(e, "free_flow_speed_kmh", where);
    if (!(edge.length_m > 0.0)) {
      throw Error(ErrorCode::validation, where + ": length_m must be positive", edge.id);
    }
    if (!(edge.free_flow_speed_kmh > 0.0)) {
      throw Error(ErrorCode::validation, where + ": free_flow_speed_kmh must be positive",
                  edge.id);
    }
    for (const auto& endpoint : {edge.from, edge.to}) {
      if (!g.node_ix_.count(endpoint)) {
        throw Error(ErrorCode::validation,
                    where + ": dangling endpoint '" + endpoint + "'", edge.id);
      }
    }
    edge.base_travel_time_s = travel_seconds(edge.length_m, edge.free_flow_speed_kmh);
    const std::size_t ix = g.edges_.size();
    if (!g.edge_ix_.emplace(edge.id, ix).second) {
      throw Error(ErrorCode::validation, "duplicate edge id '" + edge.id + "'", edge.id);
    }
    const std::size_t tail = g.node_ix_.at(edge.from);
    const std::size_t head = g.node_ix_.at(edge.to);
    g.out_[tail].push_back(ix);
    g.in_[head].push_back(ix);
    g.tail_.push_back(tail);
    g.head_.push_back(head);
    g.edges_.push_back(std::move(edge));
  }
  return g;
}

nlohmann::json graph_to_json(const RoadGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes()) {
    nodes.push_back({{"id", n.id},
                     {"lat", n.lat},
                     {"lon", n.lon},
                     {"kind", to_string(n.kind)},
                     {"country", n.country}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"id", e.id},
                     {"from", e.from},
                     {"to", e.to},
                     {"length_m", e.length_m},
                     {"free_flow_speed_kmh", e.free_flow_speed_kmh}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

std::vector<double> snapshot_edge_times(const RoadGraph& graph, Seconds t,
                                        const SpeedSource& ctx) {
  std::vector<double> times;
  times.reserve(graph.edges().size());
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const Edge& e = graph.edges()[i];
    const auto speed = ctx.effective_speed_kmh(i, e, t);
    times.push_back(speed ? travel_seconds(e.length_m, *speed) : kUnreachable);
  }
  return times;
}

std::optional<Path> shortest_path(const RoadGraph& graph, std::string_view from,
                                  std::string_view to, Seconds t,
                                  const SpeedSource& ctx) {
  const std::size_t s = graph.node_index(from);
  const std::size_t d = graph.node_index(to);
  if (s == d) return Path{};
  const auto times = snapshot_edge_times(graph, t, ctx);
  return walk(graph, times, times_to(graph, times, d), s, d);
}

TravelMatrix travel_time_matrix(const RoadGraph& graph,
                                const std::vector<std::string>& nodes, Seconds t,
                                const SpeedSource& ctx) {
  TravelModel model(graph, ctx, t);
  std::vector<std::size_t> ix;
  ix.reserve(nodes.size());
  for (const auto& id : nodes) ix.push_back(graph.node_index(id));
  TravelMatrix m(nodes.size(), std::vector<double>(nodes.size(), 0.0));
  for (std::size_t i = 0; i < ix.size(); ++i) {
    for (std::size_t j = 0; j < ix.size(); ++j) {
      m[i][j] = model.leg(ix[i], ix[j]).time_s;
    }
  }
  return m;
}

TravelModel::TravelModel(const RoadGraph& graph, const SpeedSource& ctx, Seconds t)
    : TravelModel(graph, snapshot_edge_times(graph, t, ctx), t) {}

TravelModel::TravelModel(const RoadGraph& graph, std::vector<double> edge_times,
                         Seconds t)
    : graph_(&graph), edge_times_(std::move(edge_times)), t_(t) {}

const std::vector<double>& TravelModel::tree_to(std::size_t target) {
  auto it = to_target_.find(target);
  if (it == to_target_.end()) {
    it = to_target_.emplace(target, times_to(*graph_, edge_times_, target)).first;
  }
  return it->second;
}

std::optional<Path> TravelModel::path(std::size_t from, std::size_t to) {
  if (from == to) return Path{};
  return walk(*graph_, edge_times_, tree_to(to), from, to);
}

std::optional<Path> TravelModel::path(std::string_view from, std::string_view to) {
  return path(graph_->node_index(from), graph_->node_index(to));
}

TravelModel::Leg TravelModel::leg(std::size_t from, std::size_t to) {
  if (from == to) return {0.0, 0.0};
  const std::size_t key = from * graph_->nodes().size() + to;
  auto it = legs_.find(key);
  if (it != legs_.end()) return it->second;
  Leg leg;
  if (auto p = path(from, to)) leg = {p->total_time_s, p->total_distance_m};
  legs_.emplace(key, leg);
  return leg;
}

TravelModel::Leg TravelModel::leg(std::string_view from, std::string_view to) {
  return leg(graph_->node_index(from), graph_->node_index(to));
}

nlohmann::json path_to_geojson(const RoadGraph& graph, const Path& path,
                               std::string_view from_node) {
  nlohmann::json coords = nlohmann::json::array();
  const Node& start = graph.node(from_node);
  coords.push_back({start.lon, start.lat});
  for (const auto& id : path.edge_ids) {
    const Node& n = graph.node(graph.edge(id).to);
    coords.push_back({n.lon, n.lat});
  }
  if (coords.size() == 1) coords.push_back(coords.front());
  return {{"type", "Feature"},
          {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
          {"properties",
           {{"total_time_s", path.total_time_s},
            {"total_distance_m", path.total_distance_m}}}};
}

}  // namespace coglo
