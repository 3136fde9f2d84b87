#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "dknn/dknn.hpp"

namespace dknn::testing {

// Six vertices on a line plus a long detour edge v1-v6, split {v1,v2,v3} / {v4,v5,v6}.
struct Desk6 {
  std::shared_ptr<const GraphSnapshot> graph;
  PartitionMap partition;
  std::shared_ptr<const Topology> topology;
  std::shared_ptr<const ObjectStore> objects;
};

inline GraphSnapshot desk6_graph() {
  std::vector<Point> coords{{0, 0}, {2, 0}, {4, 0}, {5, 0}, {7, 0}, {8, 1}};
  const std::vector<EdgeSpec> edges{{0, 1, 2}, {1, 2, 2}, {2, 3, 1}, {3, 4, 2}, {4, 5, 2}, {0, 5, 10}};
  return GraphSnapshot::build(std::move(coords), edges);
}

inline Desk6 desk6() {
  Desk6 d;
  d.graph = std::make_shared<GraphSnapshot>(desk6_graph());
  d.partition = PartitionMap{{0, 0, 0, 1, 1, 1}, 2};
  d.topology = std::make_shared<Topology>(derive_topology(*d.graph, d.partition));
  auto store = std::make_shared<ObjectStore>(d.partition);
  store->insert({1, 4, 1.0});  // o1 heading to v5
  store->insert({2, 1, 0.5});  // o2 heading to v2
  d.objects = store;
  return d;
}

// Bellman-Ford relaxation: an SSSP that shares no code with the heap-based ones.
inline std::vector<Cost> bellman_ford(const GraphSnapshot& g, VertexId src) {
  std::vector<Cost> d(g.vertex_count(), kInfinity);
  d[src] = 0;
  for (std::size_t round = 0; round < g.vertex_count(); ++round) {
    bool changed = false;
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      auto [a, b] = g.endpoints(e);
      const Cost w = g.weight(e);
      if (d[a] + w < d[b]) d[b] = d[a] + w, changed = true;
      if (d[b] + w < d[a]) d[a] = d[b] + w, changed = true;
    }
    if (!changed) break;
  }
  return d;
}

// Reference kNN distances from the Bellman-Ford distances.
inline std::vector<Cost> reference_knn(const GraphSnapshot& g, const ObjectStore& store, VertexId v_q,
                                       std::size_t k) {
  const auto d = bellman_ford(g, v_q);
  std::vector<Cost> all;
  for (const auto& o : store.all())
    if (d[o.live_vertex] != kInfinity) all.push_back(d[o.live_vertex] + o.remaining);
  std::sort(all.begin(), all.end());
  if (all.size() > k) all.resize(k);
  return all;
}

inline std::unique_ptr<Runtime> make_runtime(const Desk6& d, RuntimeConfig cfg) {
  return std::make_unique<Runtime>(d.graph, d.topology, d.objects, std::move(cfg));
}

}  // namespace dknn::testing
