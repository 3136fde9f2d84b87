#pragma once

// Centralized ground truth: single-source Dijkstra, incremental network
// expansion (INE) kNN, and a brute-force kNN. Used for differential testing and
// as the single-machine Dijkstra baseline.

#include <algorithm>
#include <functional>
#include <queue>
#include <utility>
#include <vector>

#include "dknn/objects.hpp"
#include "dknn/road_graph.hpp"

namespace dknn {

struct Neighbor {
  ObjectId object;
  Cost distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Ascending distance, then ascending object id.
inline bool neighbor_order(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.object < b.object;
}

struct OracleResult {
  std::vector<Neighbor> neighbors;  // sorted by neighbor_order
  std::size_t settled = 0;          // vertices popped as final
  bool insufficient = false;        // fewer than k reachable objects
};

namespace detail {
using HeapEntry = std::pair<Cost, VertexId>;
using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>>;
}  // namespace detail

// Exact distances from `source`; kInfinity for unreachable vertices.
inline std::vector<Cost> dijkstra_sssp(const GraphSnapshot& g, VertexId source,
                                       std::size_t* settled_out = nullptr) {
  std::vector<Cost> dist(g.vertex_count(), kInfinity);
  std::vector<bool> done(g.vertex_count(), false);
  detail::MinHeap heap;
  dist[source] = 0;
  heap.emplace(0, source);
  std::size_t settled = 0;
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (done[v]) continue;
    done[v] = true;
    ++settled;
    for (const auto& adj : g.neighbors(v)) {
      const Cost nd = d + g.weight(adj.edge);
      if (nd < dist[adj.to]) {
        dist[adj.to] = nd;
        heap.emplace(nd, adj.to);
      }
    }
  }
  if (settled_out) *settled_out = settled;
  return dist;
}

inline OracleResult ine_knn(const GraphSnapshot& g, const ObjectStore& store, VertexId v_q,
                            std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  OracleResult r;
  std::vector<Cost> dist(g.vertex_count(), kInfinity);
  std::vector<bool> done(g.vertex_count(), false);
  detail::MinHeap frontier;
  // Max-heap on (distance, id) holding the best k found so far.
  auto worse = [](const Neighbor& a, const Neighbor& b) { return neighbor_order(a, b); };
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> best(worse);

  dist[v_q] = 0;
  frontier.emplace(0, v_q);
  const auto& partition = store.partition();
  while (!frontier.empty()) {
    auto [d, v] = frontier.top();
    if (best.size() == k && d >= best.top().distance) break;
    frontier.pop();
    if (done[v]) continue;
    done[v] = true;
    ++r.settled;
    const auto& live = store.live_vertices(partition[v]);
    if (auto it = live.find(v); it != live.end()) {
      for (const auto& o : it->second) {
        Neighbor n{o.id, object_distance(d, o)};
        if (best.size() < k) {
          best.push(n);
        } else if (neighbor_order(n, best.top())) {
          best.pop();
          best.push(n);
        }
      }
    }
    for (const auto& adj : g.neighbors(v)) {
      const Cost nd = d + g.weight(adj.edge);
      if (nd < dist[adj.to]) {
        dist[adj.to] = nd;
        frontier.emplace(nd, adj.to);
      }
    }
  }
  r.neighbors.reserve(best.size());
  while (!best.empty()) {
    r.neighbors.push_back(best.top());
    best.pop();
  }
  std::reverse(r.neighbors.begin(), r.neighbors.end());
  r.insufficient = r.neighbors.size() < k;
  return r;
}

inline OracleResult brute_knn(const GraphSnapshot& g, const ObjectStore& store, VertexId v_q,
                              std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  OracleResult r;
  const auto dist = dijkstra_sssp(g, v_q, &r.settled);
  for (const auto& o : store.all()) {
    if (dist[o.live_vertex] == kInfinity) continue;
    r.neighbors.push_back({o.id, object_distance(dist[o.live_vertex], o)});
  }
  std::sort(r.neighbors.begin(), r.neighbors.end(), neighbor_order);
  if (r.neighbors.size() > k) r.neighbors.resize(k);
  r.insufficient = r.neighbors.size() < k;
  return r;
}

// Sorted distances of a result; the comparison key for differential checks.
inline std::vector<Cost> distance_multiset(const std::vector<Neighbor>& ns) {
  std::vector<Cost> d;
  d.reserve(ns.size());
  for (const auto& n : ns) d.push_back(n.distance);
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace dknn
