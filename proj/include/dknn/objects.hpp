#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <unordered_map>
#include <vector>

#include "dknn/dimacs.hpp"
#include "dknn/partitioner.hpp"

namespace dknn {

struct MovingObject {
  ObjectId id = 0;
  VertexId live_vertex = 0;  // vertex the object is travelling toward
  Cost remaining = 0;        // remaining travel cost to reach live_vertex
};

// SD(v_q, o) = SD(v_q, live vertex) + remaining.
inline Cost object_distance(Cost sd_to_live, const MovingObject& o) { return sd_to_live + o.remaining; }

// Objects indexed per subgraph by live vertex, plus a global id index.
class ObjectStore {
 public:
  struct Location {
    SubgraphId sg;
    VertexId live_vertex;
  };
  // Ordered so that iteration (and therefore candidate emission) is deterministic.
  using LiveMap = std::map<VertexId, std::vector<MovingObject>>;

  ObjectStore() = default;
  explicit ObjectStore(const PartitionMap& partition)
      : partition_(std::make_shared<const PartitionMap>(partition)), per_subgraph_(partition.m) {}

  void insert(const MovingObject& o) {
    if (o.live_vertex >= partition_->assignment.size())
      throw ValidationError("object " + std::to_string(o.id) + " references unknown vertex " +
                            std::to_string(o.live_vertex));
    if (!(o.remaining >= 0))
      throw ValidationError("object " + std::to_string(o.id) + " has negative remaining cost");
    if (index_.contains(o.id)) throw ValidationError("duplicate object id " + std::to_string(o.id));
    const SubgraphId sg = (*partition_)[o.live_vertex];
    per_subgraph_[sg][o.live_vertex].push_back(o);
    index_.emplace(o.id, Location{sg, o.live_vertex});
  }

  void move(ObjectId id, VertexId new_live_vertex, Cost new_remaining) {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown object id " + std::to_string(id));
    if (new_live_vertex >= partition_->assignment.size())
      throw ValidationError("unknown vertex " + std::to_string(new_live_vertex));
    if (!(new_remaining >= 0)) throw ValidationError("negative remaining cost");
    auto& old_map = per_subgraph_[it->second.sg];
    auto bucket = old_map.find(it->second.live_vertex);
    auto& objs = bucket->second;
    auto pos = std::find_if(objs.begin(), objs.end(), [&](const MovingObject& o) { return o.id == id; });
    objs.erase(pos);
    if (objs.empty()) old_map.erase(bucket);
    const SubgraphId sg = (*partition_)[new_live_vertex];
    per_subgraph_[sg][new_live_vertex].push_back({id, new_live_vertex, new_remaining});
    it->second = {sg, new_live_vertex};
  }

  std::size_t size() const noexcept { return index_.size(); }
  const LiveMap& live_vertices(SubgraphId sg) const { return per_subgraph_[sg]; }
  const std::unordered_map<ObjectId, Location>& index() const noexcept { return index_; }
  const PartitionMap& partition() const { return *partition_; }

  const MovingObject& get(ObjectId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown object id " + std::to_string(id));
    for (const auto& o : per_subgraph_[it->second.sg].at(it->second.live_vertex))
      if (o.id == id) return o;
    throw ContractViolation("object index out of sync for id " + std::to_string(id));
  }

  // All objects, sorted by id.
  std::vector<MovingObject> all() const {
    std::vector<MovingObject> out;
    out.reserve(size());
    for (const auto& m : per_subgraph_)
      for (const auto& [v, objs] : m) out.insert(out.end(), objs.begin(), objs.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

 private:
  std::shared_ptr<const PartitionMap> partition_;
  std::vector<LiveMap> per_subgraph_;
  std::unordered_map<ObjectId, Location> index_;
};

inline Cost median_edge_weight(const GraphSnapshot& g) {
  if (g.edge_count() == 0) return 0;
  std::vector<Cost> w(g.weights().begin(), g.weights().end());
  auto mid = w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2);
  std::nth_element(w.begin(), mid, w.end());
  return *mid;
}

// mu objects on uniformly random vertices, remaining uniform in [0, median weight].
inline ObjectStore generate_objects(const GraphSnapshot& g, const PartitionMap& partition,
                                    std::size_t mu, std::uint64_t seed) {
  if (mu == 0) throw ValidationError("object count must be at least 1");
  std::mt19937_64 rng(seed);
  const Cost hi = median_edge_weight(g);
  ObjectStore store(partition);
  for (std::size_t i = 0; i < mu; ++i) {
    const auto v = static_cast<VertexId>(rng() % g.vertex_count());
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    store.insert({static_cast<ObjectId>(i), v, u * hi});
  }
  return store;
}

// Object file: `id vertex remaining` per line, vertex 1-based. Batches (for
// move streams) are separated by lines starting with `#`.
inline std::vector<std::vector<MovingObject>> read_object_batches(const std::filesystem::path& file) {
  auto in = detail::open_input(file);
  std::vector<std::vector<MovingObject>> batches(1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0].starts_with("#")) {
      if (!batches.back().empty()) batches.emplace_back();
      continue;
    }
    ObjectId id = 0;
    std::int64_t v = 0;
    double rem = 0;
    if (tok.size() != 3 || !detail::parse_number(tok[0], id) || !detail::parse_number(tok[1], v) ||
        !detail::parse_number(tok[2], rem) || v < 1)
      throw ParseError(file.string(), lineno, "expected `<id> <vertex> <remaining>`");
    batches.back().push_back({id, static_cast<VertexId>(v - 1), rem});
  }
  if (batches.back().empty() && batches.size() > 1) batches.pop_back();
  return batches;
}

inline ObjectStore load_objects(const std::filesystem::path& file, const PartitionMap& partition) {
  ObjectStore store(partition);
  for (const auto& batch : read_object_batches(file))
    for (const auto& o : batch) store.insert(o);
  return store;
}

inline void write_objects(std::span<const MovingObject> objs, std::ostream& out) {
  out.precision(17);
  for (const auto& o : objs) out << o.id << ' ' << o.live_vertex + 1 << ' ' << o.remaining << '\n';
}

}  // namespace dknn
