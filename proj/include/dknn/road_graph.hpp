#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dknn/types.hpp"

namespace dknn {

inline double euclid(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct EdgeSpec {
  VertexId u = 0;
  VertexId v = 0;
  Cost weight = 0;
};

struct WeightUpdate {
  VertexId u = 0;
  VertexId v = 0;
  Cost new_weight = 0;
};

class UpdateError : public Error {
 public:
  UpdateError(const std::string& what, std::vector<WeightUpdate> offenders)
      : Error(what), offenders_(std::move(offenders)) {}
  const std::vector<WeightUpdate>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<WeightUpdate> offenders_;
};

struct Adjacent {
  VertexId to;
  EdgeId edge;
};

// Immutable, versioned undirected road network.
//
// The topology (coordinates, CSR adjacency, edge endpoints) is shared between
// every snapshot derived from the same load; only the weight array is copied
// when an update produces a new version.
class GraphSnapshot {
 public:
  struct Structure {
    std::vector<Point> coords;
    std::vector<std::pair<VertexId, VertexId>> endpoints;  // per edge, first < second
    std::vector<std::uint32_t> offsets;                    // CSR, size |V|+1
    std::vector<Adjacent> adjacency;                       // sorted by `to` within a vertex
  };

  // Builds version 0. Parallel edges collapse to the minimum weight.
  static GraphSnapshot build(std::vector<Point> coords, std::span<const EdgeSpec> edges) {
    const auto n = static_cast<VertexId>(coords.size());
    std::map<std::pair<VertexId, VertexId>, Cost> unique;
    for (const auto& e : edges) {
      if (e.u >= n || e.v >= n)
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") references a vertex without coordinates");
      if (e.u == e.v) throw ValidationError("self-loop at vertex " + std::to_string(e.u));
      if (!(e.weight >= 0))
        throw ValidationError("negative weight on edge (" + std::to_string(e.u) + "," +
                              std::to_string(e.v) + ")");
      auto key = std::minmax(e.u, e.v);
      auto [it, inserted] = unique.emplace(key, e.weight);
      if (!inserted) it->second = std::min(it->second, e.weight);
    }

    auto s = std::make_shared<Structure>();
    s->coords = std::move(coords);
    auto weights = std::make_shared<std::vector<Cost>>();
    s->endpoints.reserve(unique.size());
    weights->reserve(unique.size());
    for (const auto& [key, w] : unique) {
      s->endpoints.push_back(key);
      weights->push_back(w);
    }

    std::vector<std::uint32_t> degree(n, 0);
    for (const auto& [a, b] : s->endpoints) {
      ++degree[a];
      ++degree[b];
    }
    s->offsets.assign(n + 1, 0);
    for (VertexId v = 0; v < n; ++v) s->offsets[v + 1] = s->offsets[v] + degree[v];
    s->adjacency.resize(s->offsets[n]);
    std::vector<std::uint32_t> fill(s->offsets.begin(), s->offsets.end() - 1);
    for (EdgeId e = 0; e < s->endpoints.size(); ++e) {
      auto [a, b] = s->endpoints[e];
      s->adjacency[fill[a]++] = {b, e};
      s->adjacency[fill[b]++] = {a, e};
    }
    for (VertexId v = 0; v < n; ++v) {
      std::sort(s->adjacency.begin() + s->offsets[v], s->adjacency.begin() + s->offsets[v + 1],
                [](const Adjacent& l, const Adjacent& r) { return l.to < r.to; });
    }

    GraphSnapshot g;
    g.structure_ = std::move(s);
    g.weights_ = std::move(weights);
    g.version_ = 0;
    g.rescan_gamma();
    return g;
  }

  Version version() const noexcept { return version_; }
  std::size_t vertex_count() const noexcept { return structure_->coords.size(); }
  std::size_t edge_count() const noexcept { return structure_->endpoints.size(); }

  const Point& coord(VertexId v) const { return structure_->coords[v]; }
  std::span<const Point> coords() const noexcept { return structure_->coords; }

  std::span<const Adjacent> neighbors(VertexId v) const {
    const auto& s = *structure_;
    return {s.adjacency.data() + s.offsets[v], s.adjacency.data() + s.offsets[v + 1]};
  }

  Cost weight(EdgeId e) const { return (*weights_)[e]; }
  std::span<const Cost> weights() const noexcept { return *weights_; }
  std::pair<VertexId, VertexId> endpoints(EdgeId e) const { return structure_->endpoints[e]; }

  // Edge id joining u and v, if any.
  std::optional<EdgeId> find_edge(VertexId u, VertexId v) const {
    if (u >= vertex_count() || v >= vertex_count()) return std::nullopt;
    auto adj = neighbors(u);
    auto it = std::lower_bound(adj.begin(), adj.end(), v,
                               [](const Adjacent& a, VertexId t) { return a.to < t; });
    if (it == adj.end() || it->to != v) return std::nullopt;
    return it->edge;
  }

  // Admissibility factor: max over edges of euclid(u,v) / weight. Infinite when
  // some zero-weight edge joins two distinct points.
  double gamma() const noexcept { return degenerate_edges_ > 0 ? kInfinity : finite_gamma_; }

  // Lower bound on SD(u, v) derived from coordinates.
  Cost euclid_lower_bound(VertexId u, VertexId v) const {
    return lower_bound_from(coord(u), coord(v));
  }
  Cost lower_bound_from(const Point& a, const Point& b) const {
    const double g = gamma();
    if (g == 0.0 || std::isinf(g)) return 0.0;
    // Shaved by a few ulps so rounding never lifts the bound above SD.
    return euclid(a, b) / g * (1.0 - 1e-12);
  }

  // Shares the structure; copies and edits the weight array. All-or-nothing.
  GraphSnapshot apply_updates(std::span<const WeightUpdate> updates) const {
    std::vector<std::pair<EdgeId, Cost>> resolved;
    resolved.reserve(updates.size());
    std::vector<WeightUpdate> offenders;
    for (const auto& u : updates) {
      auto e = find_edge(u.u, u.v);
      if (!e || !(u.new_weight >= 0)) {
        offenders.push_back(u);
        continue;
      }
      resolved.emplace_back(*e, u.new_weight);
    }
    if (!offenders.empty()) {
      std::ostringstream os;
      os << "rejected " << offenders.size() << " update(s):";
      for (std::size_t i = 0; i < offenders.size() && i < 8; ++i)
        os << " (" << offenders[i].u << "," << offenders[i].v << "," << offenders[i].new_weight
           << ")";
      if (offenders.size() > 8) os << " ...";
      throw UpdateError(os.str(), std::move(offenders));
    }

    GraphSnapshot next;
    next.structure_ = structure_;
    auto weights = std::make_shared<std::vector<Cost>>(*weights_);
    next.version_ = version_ + 1;
    next.finite_gamma_ = finite_gamma_;
    next.gamma_edge_ = gamma_edge_;
    next.degenerate_edges_ = degenerate_edges_;

    bool rescan = false;
    for (auto [e, w] : resolved) {
      const double before = ratio(e, (*weights)[e]);
      const double after = ratio(e, w);
      (*weights)[e] = w;
      if (std::isinf(before)) --next.degenerate_edges_;
      if (std::isinf(after)) ++next.degenerate_edges_;
      if (e == next.gamma_edge_ && after < before) rescan = true;
      if (!std::isinf(after) && after > next.finite_gamma_) {
        next.finite_gamma_ = after;
        next.gamma_edge_ = e;
      }
    }
    next.weights_ = std::move(weights);
    // The previous maximum shrank; some other edge may now hold it.
    if (rescan) next.rescan_gamma();
    return next;
  }

 private:
  double ratio(EdgeId e, Cost w) const {
    auto [a, b] = structure_->endpoints[e];
    const double d = euclid(structure_->coords[a], structure_->coords[b]);
    if (d == 0.0) return 0.0;
    if (w == 0.0) return kInfinity;
    return d / w;
  }

  void rescan_gamma() {
    finite_gamma_ = 0.0;
    gamma_edge_ = 0;
    degenerate_edges_ = 0;
    for (EdgeId e = 0; e < edge_count(); ++e) {
      const double r = ratio(e, (*weights_)[e]);
      if (std::isinf(r)) {
        ++degenerate_edges_;
      } else if (r > finite_gamma_) {
        finite_gamma_ = r;
        gamma_edge_ = e;
      }
    }
  }

  std::shared_ptr<const Structure> structure_;
  std::shared_ptr<const std::vector<Cost>> weights_;
  Version version_ = 0;
  double finite_gamma_ = 0.0;
  EdgeId gamma_edge_ = 0;
  std::size_t degenerate_edges_ = 0;
};

}  // namespace dknn
