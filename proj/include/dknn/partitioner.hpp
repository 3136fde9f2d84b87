#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dknn/dimacs.hpp"
#include "dknn/road_graph.hpp"

namespace dknn {

struct PartitionMap {
  std::vector<SubgraphId> assignment;  // vertex -> subgraph
  SubgraphId m = 0;

  SubgraphId operator[](VertexId v) const { return assignment[v]; }
};

// Recursive coordinate bisection. Each split cuts the longer bounding-box axis
// at the point that divides the vertices in proportion to the parts requested
// on each side, so part sizes differ by at most one vertex per level. Parts are
// not guaranteed to be connected. The seed only breaks exact axis-extent ties.
inline PartitionMap partition_rcb(const GraphSnapshot& g, SubgraphId m, std::uint64_t seed = 0) {
  const auto n = g.vertex_count();
  if (m < 1) throw ValidationError("partition count must be at least 1");
  if (m > n)
    throw ValidationError("partition count " + std::to_string(m) + " exceeds vertex count " +
                          std::to_string(n));
  PartitionMap map{std::vector<SubgraphId>(n, 0), m};
  std::vector<VertexId> order(n);
  std::iota(order.begin(), order.end(), VertexId{0});
  std::mt19937_64 rng(seed);
  auto coords = g.coords();

  struct Task {
    std::size_t begin, end;
    SubgraphId first_part, parts;
  };
  std::vector<Task> stack{{0, n, 0, m}};
  while (!stack.empty()) {
    Task t = stack.back();
    stack.pop_back();
    if (t.parts == 1) {
      for (std::size_t i = t.begin; i < t.end; ++i) map.assignment[order[i]] = t.first_part;
      continue;
    }
    double minx = kInfinity, maxx = -kInfinity, miny = kInfinity, maxy = -kInfinity;
    for (std::size_t i = t.begin; i < t.end; ++i) {
      const auto& p = coords[order[i]];
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
    bool split_x = (maxx - minx) > (maxy - miny);
    if ((maxx - minx) == (maxy - miny)) split_x = (rng() & 1U) == 0;

    auto first = order.begin() + static_cast<std::ptrdiff_t>(t.begin);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(t.end);
    std::sort(first, last, [&](VertexId a, VertexId b) {
      const double ca = split_x ? coords[a].x : coords[a].y;
      const double cb = split_x ? coords[b].x : coords[b].y;
      return ca != cb ? ca < cb : a < b;
    });
    const SubgraphId left_parts = t.parts / 2;
    const std::size_t count = t.end - t.begin;
    const std::size_t left = count * left_parts / t.parts;
    stack.push_back({t.begin, t.begin + left, t.first_part, left_parts});
    stack.push_back({t.begin + left, t.end, t.first_part + left_parts, t.parts - left_parts});
  }
  return map;
}

// Checks totality and that no part id in 0..m-1 is empty.
inline void validate_partition(const PartitionMap& p, std::size_t vertex_count) {
  if (p.assignment.size() != vertex_count)
    throw ValidationError("partition covers " + std::to_string(p.assignment.size()) +
                          " vertices, graph has " + std::to_string(vertex_count));
  std::vector<std::size_t> sizes(p.m, 0);
  for (auto s : p.assignment) {
    if (s >= p.m) throw ValidationError("part id " + std::to_string(s) + " out of range");
    ++sizes[s];
  }
  std::string empty;
  for (SubgraphId s = 0; s < p.m; ++s)
    if (sizes[s] == 0) empty += (empty.empty() ? "" : ", ") + std::to_string(s);
  if (!empty.empty()) throw ValidationError("empty part(s): " + empty);
}

// METIS output convention: line i holds the part id of vertex i.
inline PartitionMap import_partition(const std::filesystem::path& file, const GraphSnapshot& g) {
  auto in = detail::open_input(file);
  PartitionMap p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    SubgraphId id = 0;
    if (tok.size() != 1 || !detail::parse_number(tok[0], id))
      throw ParseError(file.string(), lineno, "expected a single part id");
    p.assignment.push_back(id);
    p.m = std::max(p.m, id + 1);
  }
  if (p.assignment.size() != g.vertex_count())
    throw ValidationError("partition file " + file.string() + " has " +
                          std::to_string(p.assignment.size()) + " lines, expected " +
                          std::to_string(g.vertex_count()));
  validate_partition(p, g.vertex_count());
  return p;
}

inline void write_partition(const PartitionMap& p, std::ostream& out) {
  for (auto s : p.assignment) out << s << '\n';
}

struct ExternalEdge {
  VertexId local;         // border vertex inside this subgraph
  VertexId remote;        // border vertex of the neighbouring subgraph
  SubgraphId remote_sg;
  EdgeId edge;
  bool owner;             // true in exactly one of the two incident subgraphs
};

struct SubgraphTopology {
  SubgraphId id = 0;
  std::vector<VertexId> vertices;         // sorted global ids
  std::vector<VertexId> border_vertices;  // sorted global ids
  std::vector<ExternalEdge> external_edges;
  std::vector<SubgraphId> neighbor_sgs;   // sorted
  std::vector<Point> border_coords;       // parallel to border_vertices
  std::size_t internal_edge_count = 0;
};

// Everything the runtime needs about a partitioned snapshot.
struct Topology {
  PartitionMap partition;
  std::vector<SubgraphTopology> subgraphs;
  std::vector<std::uint32_t> local_index;  // global vertex -> index within its subgraph

  SubgraphId subgraph_of(VertexId v) const { return partition[v]; }
  std::size_t max_subgraph_size() const {
    std::size_t best = 0;
    for (const auto& s : subgraphs) best = std::max(best, s.vertices.size());
    return best;
  }
};

inline Topology derive_topology(const GraphSnapshot& g, const PartitionMap& partition) {
  validate_partition(partition, g.vertex_count());
  Topology t;
  t.partition = partition;
  t.subgraphs.resize(partition.m);
  t.local_index.assign(g.vertex_count(), 0);
  for (SubgraphId s = 0; s < partition.m; ++s) t.subgraphs[s].id = s;
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    auto& sg = t.subgraphs[partition[v]];
    t.local_index[v] = static_cast<std::uint32_t>(sg.vertices.size());
    sg.vertices.push_back(v);
  }
  for (auto& sg : t.subgraphs) {
    for (VertexId v : sg.vertices) {
      bool border = false;
      for (const auto& adj : g.neighbors(v)) {
        const SubgraphId other = partition[adj.to];
        if (other == sg.id) {
          if (v < adj.to) ++sg.internal_edge_count;
          continue;
        }
        border = true;
        sg.external_edges.push_back({v, adj.to, other, adj.edge, sg.id < other});
        sg.neighbor_sgs.push_back(other);
      }
      if (border) {
        sg.border_vertices.push_back(v);
        sg.border_coords.push_back(g.coord(v));
      }
    }
    std::sort(sg.neighbor_sgs.begin(), sg.neighbor_sgs.end());
    sg.neighbor_sgs.erase(std::unique(sg.neighbor_sgs.begin(), sg.neighbor_sgs.end()),
                          sg.neighbor_sgs.end());
  }
  return t;
}

// Diagnostic text report, one row per subgraph.
inline void write_topology_report(const Topology& t, std::ostream& out) {
  std::size_t ext = 0, internal = 0, borders = 0;
  for (const auto& sg : t.subgraphs) {
    internal += sg.internal_edge_count;
    borders += sg.border_vertices.size();
    for (const auto& e : sg.external_edges) ext += e.owner ? 1 : 0;
  }
  out << "# subgraphs " << t.subgraphs.size() << " border_vertices " << borders
      << " internal_edges " << internal << " external_edges " << ext << '\n';
  out << "# sg vertices border_vertices internal_edges external_edges neighbor_sgs\n";
  for (const auto& sg : t.subgraphs) {
    out << sg.id << ' ' << sg.vertices.size() << ' ' << sg.border_vertices.size() << ' '
        << sg.internal_edge_count << ' ' << sg.external_edges.size() << ' '
        << sg.neighbor_sgs.size() << '\n';
  }
}

}  // namespace dknn
