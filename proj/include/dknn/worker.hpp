#pragma once

// Per-subgraph search instance. Runs intra-subgraph exploration (ISE) for
// incoming query messages, keeps a per-snapshot Dijkstra cache keyed by entry
// vertex, and a per-query distance cache over its live and border vertices.
//
// A cached search settles vertices lazily: an ISE pass walks the settled
// prefix in distance order and extends it only while the query bound allows,
// so a later pass with a looser bound resumes where the last one stopped.

#include <algorithm>
#include <limits>
#include <optional>
#include <map>
#include <memory>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dknn/kbest.hpp"
#include "dknn/messages.hpp"
#include "dknn/partitioner.hpp"

namespace dknn {

struct WorkerCounters {
  std::uint64_t messages_in = 0;
  std::uint64_t dijkstra_runs = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t settled = 0;
  std::uint64_t messages_out = 0;
  std::uint64_t candidates_out = 0;
  std::uint64_t stale_messages = 0;
  std::uint64_t late_messages = 0;
};

struct WorkerOptions {
  // Carry and apply upper bounds (message bounds, the worker's own k-best,
  // coordinator updates). Off for the no-pruning variant.
  bool use_bounds = true;
};

// A remote border vertex whose distance from v_q improved during one ISE pass.
struct BorderImprovement {
  VertexId vertex;
  SubgraphId sg;
  Cost dist;
};

struct IseResult {
  std::vector<Candidate> candidates;
  std::vector<BorderImprovement> improvements;
  bool explored = false;
  bool ran_dijkstra = false;
  std::uint64_t settled = 0;
};

class SubgraphWorker {
 public:
  SubgraphWorker(SubgraphId id, std::shared_ptr<const Topology> topology,
                 std::shared_ptr<const GraphSnapshot> snapshot,
                 std::shared_ptr<const ObjectStore> objects, WorkerOptions options = {})
      : id_(id),
        topology_(std::move(topology)),
        snapshot_(std::move(snapshot)),
        objects_(std::move(objects)),
        options_(options) {
    const auto& sg = topology_->subgraphs.at(id_);
    const auto n = sg.vertices.size();
    std::vector<std::vector<Adjacent>> local(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (const auto& adj : snapshot_->neighbors(sg.vertices[i])) {
        if (topology_->partition[adj.to] == id_)
          local[i].push_back({topology_->local_index[adj.to], adj.edge});
      }
    }
    offsets_.assign(n + 1, 0);
    for (std::uint32_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + local[i].size();
    adjacency_.reserve(offsets_[n]);
    for (auto& l : local) adjacency_.insert(adjacency_.end(), l.begin(), l.end());

    std::vector<External> ext;
    for (const auto& e : sg.external_edges)
      ext.push_back({topology_->local_index[e.local], e.remote, e.remote_sg, e.edge});
    std::sort(ext.begin(), ext.end(), [](const External& a, const External& b) { return a.local < b.local; });
    ext_offsets_.assign(n + 1, 0);
    for (const auto& x : ext) ++ext_offsets_[x.local + 1];
    for (std::uint32_t i = 0; i < n; ++i) ext_offsets_[i + 1] += ext_offsets_[i];
    external_ = std::move(ext);
    rebuild_slots();
  }

  SubgraphWorker(const SubgraphWorker&) = delete;
  SubgraphWorker& operator=(const SubgraphWorker&) = delete;

  SubgraphId id() const noexcept { return id_; }
  Version version() const noexcept { return snapshot_->version(); }
  const WorkerCounters& counters() const noexcept { return counters_; }

  // Handles one inbound query message. Always returns exactly one report
  // (which carries the acknowledgment) plus the merged outgoing messages.
  Outbox handle_query_message(const QueryMessage& msg) {
    ++counters_.messages_in;
    WorkerReport report;
    report.qid = msg.qid;
    report.sg = id_;
    report.ack = msg.token;
    Outbox out;

    if (msg.version != version()) {
      ++counters_.stale_messages;
      report.stale = true;
      out.push_back({id_, kCoordinatorId, std::move(report)});
      return out;
    }
    auto& ctx = context(msg.qid);
    if (ctx.closed) {
      ++counters_.late_messages;
      out.push_back({id_, kCoordinatorId, std::move(report)});
      return out;
    }
    ctx.set_k(msg.k);
    if (options_.use_bounds) ctx.epsilon = std::min(ctx.epsilon, msg.bound);
    if (ctx.epsilon == 0) {
      out.push_back({id_, kCoordinatorId, std::move(report)});
      return out;
    }

    auto entries = msg.entries;
    std::sort(entries.begin(), entries.end(), [](const BorderEntry& a, const BorderEntry& b) {
      return a.dist != b.dist ? a.dist < b.dist : a.vertex < b.vertex;
    });
    // destination subgraph -> (remote vertex -> best distance)
    std::map<SubgraphId, std::map<VertexId, Cost>> outgoing;
    for (const auto& entry : entries) {
      if (topology_->partition[entry.vertex] != id_) continue;
      auto r = run_ise(msg.qid, entry.vertex, entry.dist);
      report.explored |= r.explored;
      if (r.ran_dijkstra) {
        ++report.dijkstra_runs;
        report.settled += r.settled;
      } else if (r.explored) {
        ++report.cache_hits;
      }
      report.candidates.insert(report.candidates.end(), r.candidates.begin(), r.candidates.end());
      for (const auto& imp : r.improvements) {
        auto [it, inserted] = outgoing[imp.sg].emplace(imp.vertex, imp.dist);
        if (!inserted) it->second = std::min(it->second, imp.dist);
      }
    }

    for (auto& [dest, vertices] : outgoing) {
      QueryMessage m;
      m.qid = msg.qid;
      m.from = id_;
      m.to = dest;
      m.version = version();
      m.k = ctx.k;
      m.bound = options_.use_bounds ? ctx.epsilon : kInfinity;
      for (auto [v, d] : vertices) {
        // Entries beyond the bound would be discarded by the receiver.
        if (options_.use_bounds && d > ctx.epsilon) continue;
        m.entries.push_back({v, d});
      }
      if (m.entries.empty()) continue;
      m.token = {msg.qid, id_, dest, ctx.next_seq[dest]++};
      report.notices.push_back(m.token);
      ++counters_.messages_out;
      out.push_back({id_, dest, std::move(m)});
    }
    counters_.candidates_out += report.candidates.size();
    // The report goes first in the outbox; delivery order is up to the runtime.
    out.insert(out.begin(), Envelope{id_, kCoordinatorId, std::move(report)});
    return out;
  }

  // One ISE pass from `entry` (a vertex of this subgraph) reached at `dist`.
  IseResult run_ise(QueryId qid, VertexId entry, Cost dist) {
    IseResult r;
    auto& ctx = context(qid);
    const std::uint32_t src = topology_->local_index[entry];
    if (dist > ctx.epsilon || !(dist < ctx.get(src))) return r;
    r.explored = true;

    auto it = searches_.find(src);
    if (it == searches_.end()) {
      ++counters_.dijkstra_runs;
      r.ran_dijkstra = true;
      it = searches_.emplace(src, Search(offsets_.size() - 1, src)).first;
    } else {
      ++counters_.cache_hits;
    }
    Search& sp = it->second;

    for (std::size_t i = 0;; ++i) {
      if (i == sp.order.size()) {
        if (!settle_next(sp)) break;
        ++r.settled;
      }
      const std::uint32_t u = sp.order[i];
      const Cost nd = dist + sp.dist[u];
      if (nd > ctx.epsilon) break;
      if (slot_of_[u] != kNoSlot && nd < ctx.get(u)) {
        ctx.set(u, nd);
        if (const auto* objs = live_objects_[u]) {
          for (const auto& o : *objs) {
            const Cost od = object_distance(nd, o);
            if (!(od < ctx.epsilon)) continue;
            r.candidates.push_back({o.id, od});
            if (options_.use_bounds && ctx.k > 0) {
              ctx.best.offer(o.id, od);
              ctx.epsilon = std::min(ctx.epsilon, ctx.best.bound());
            }
          }
        }
      }
      for (auto e = ext_offsets_[u]; e < ext_offsets_[u + 1]; ++e) {
        const auto& x = external_[e];
        const Cost rd = nd + snapshot_->weight(x.edge);
        auto [rt, inserted] = ctx.remote.emplace(x.remote, rd);
        if (!inserted) {
          if (!(rd < rt->second)) continue;
          rt->second = rd;
        }
        r.improvements.push_back({x.remote, x.remote_sg, rd});
      }
    }
    counters_.settled += r.settled;
    // The query vertex has no slot; remember its distance all the same.
    ctx.set(src, dist);
    return r;
  }

  void handle_epsilon(QueryId qid, Cost epsilon) {
    auto& ctx = context(qid);
    if (ctx.closed) return;
    ctx.epsilon = std::min(ctx.epsilon, epsilon);
  }

  void close_query(QueryId qid) { context(qid).closed = true; }

  // Drops all per-snapshot and per-query state and switches to `snapshot`.
  void advance_snapshot(std::shared_ptr<const GraphSnapshot> snapshot,
                        std::shared_ptr<const ObjectStore> objects) {
    if (snapshot->version() <= version())
      throw ContractViolation("worker " + std::to_string(id_) + ": snapshot version " +
                              std::to_string(snapshot->version()) + " does not advance " +
                              std::to_string(version()));
    for (const auto& [qid, ctx] : queries_)
      if (!ctx.closed)
        throw ContractViolation("worker " + std::to_string(id_) + ": query " + std::to_string(qid) +
                                " still in flight at snapshot advance");
    snapshot_ = std::move(snapshot);
    if (objects) objects_ = std::move(objects);
    searches_.clear();
    queries_.clear();
    rebuild_slots();
  }

  void advance_snapshot(const SnapshotAdvance& a) { advance_snapshot(a.snapshot, a.objects); }

  // Dispatches any worker-bound payload.
  Outbox handle(const Payload& p) {
    if (auto* m = std::get_if<QueryMessage>(&p)) return handle_query_message(*m);
    if (auto* e = std::get_if<EpsilonUpdate>(&p)) handle_epsilon(e->qid, e->epsilon);
    else if (auto* c = std::get_if<QueryClosed>(&p)) close_query(c->qid);
    else if (auto* a = std::get_if<SnapshotAdvance>(&p)) advance_snapshot(*a);
    else throw ContractViolation("worker received a coordinator-bound payload");
    return {};
  }

  // Introspection.
  Cost epsilon(QueryId qid) const {
    auto it = queries_.find(qid);
    return it == queries_.end() ? kInfinity : it->second.epsilon;
  }
  Cost query_distance(QueryId qid, VertexId v) const {
    auto it = queries_.find(qid);
    if (it == queries_.end()) return kInfinity;
    if (topology_->partition[v] == id_) return it->second.get(topology_->local_index[v]);
    auto r = it->second.remote.find(v);
    return r == it->second.remote.end() ? kInfinity : r->second;
  }
  bool has_cached_source(VertexId v) const {
    return topology_->partition[v] == id_ && searches_.contains(topology_->local_index[v]);
  }
  // Cached intra-subgraph distance from `source` to `target`, if cached.
  std::optional<Cost> cached_distance(VertexId source, VertexId target) const {
    if (!has_cached_source(source)) return std::nullopt;
    const auto& sp = searches_.at(topology_->local_index[source]);
    const auto t = topology_->local_index[target];
    if (!sp.done[t]) return std::nullopt;
    return sp.dist[t];
  }
  std::size_t dijkstra_cache_size() const noexcept { return searches_.size(); }
  std::size_t query_cache_size() const noexcept { return queries_.size(); }
  std::size_t open_queries() const {
    return static_cast<std::size_t>(
        std::count_if(queries_.begin(), queries_.end(), [](const auto& q) { return !q.second.closed; }));
  }
  const std::vector<VertexId>& cached_sources_global() const {
    scratch_sources_.clear();
    for (const auto& [src, sp] : searches_)
      scratch_sources_.push_back(topology_->subgraphs[id_].vertices[src]);
    std::sort(scratch_sources_.begin(), scratch_sources_.end());
    return scratch_sources_;
  }

 private:
  static constexpr std::uint32_t kNoSlot = std::numeric_limits<std::uint32_t>::max();

  struct External {
    std::uint32_t local;
    VertexId remote;
    SubgraphId remote_sg;
    EdgeId edge;
  };
  // Dijkstra from one source over the subgraph, settled on demand.
  struct Search {
    using Entry = std::pair<Cost, std::uint32_t>;
    std::vector<Cost> dist;
    std::vector<char> done;
    std::vector<std::uint32_t> order;  // settled vertices, nondecreasing distance
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    Search(std::size_t n, std::uint32_t src) : dist(n, kInfinity), done(n, 0) {
      dist[src] = 0;
      heap.emplace(0, src);
    }
  };

  // Per-query state. Distances are tracked for live and border vertices
  // (dense slots) plus any other entry vertex (the query vertex itself).
  struct QueryContext {
    const std::vector<std::uint32_t>* slot_of = nullptr;
    std::vector<Cost> slots;
    std::unordered_map<std::uint32_t, Cost> extra;
    std::unordered_map<VertexId, Cost> remote;  // advisory, vertices of other subgraphs
    std::unordered_map<SubgraphId, std::uint64_t> next_seq;
    Cost epsilon = kInfinity;
    std::uint32_t k = 0;
    KBest<ObjectId> best{1};
    bool closed = false;

    void set_k(std::uint32_t kk) {
      if (k == 0 && kk > 0) {
        k = kk;
        best = KBest<ObjectId>(kk);
      }
    }
    Cost get(std::uint32_t local) const {
      const auto s = (*slot_of)[local];
      if (s != kNoSlot) return slots[s];
      auto it = extra.find(local);
      return it == extra.end() ? kInfinity : it->second;
    }
    void set(std::uint32_t local, Cost d) {
      const auto s = (*slot_of)[local];
      if (s != kNoSlot)
        slots[s] = d;
      else
        extra[local] = d;
    }
  };

  QueryContext& context(QueryId qid) {
    auto [it, inserted] = queries_.try_emplace(qid);
    if (inserted) {
      it->second.slot_of = &slot_of_;
      it->second.slots.assign(slot_count_, kInfinity);
    }
    return it->second;
  }

  void rebuild_slots() {
    const auto& sg = topology_->subgraphs[id_];
    slot_of_.assign(sg.vertices.size(), kNoSlot);
    slot_count_ = 0;
    for (VertexId b : sg.border_vertices) slot_of_[topology_->local_index[b]] = slot_count_++;
    live_objects_.assign(sg.vertices.size(), nullptr);
    if (objects_) {
      for (const auto& [v, objs] : objects_->live_vertices(id_)) {
        const auto l = topology_->local_index[v];
        if (slot_of_[l] == kNoSlot) slot_of_[l] = slot_count_++;
        live_objects_[l] = &objs;
      }
    }
  }

  // Settles the next vertex of `sp`; false once the subgraph is exhausted.
  bool settle_next(Search& sp) {
    while (!sp.heap.empty()) {
      auto [d, v] = sp.heap.top();
      sp.heap.pop();
      if (sp.done[v]) continue;
      sp.done[v] = 1;
      sp.order.push_back(v);
      for (auto i = offsets_[v]; i < offsets_[v + 1]; ++i) {
        const auto& a = adjacency_[i];
        const Cost nd = d + snapshot_->weight(a.edge);
        if (nd < sp.dist[a.to]) {
          sp.dist[a.to] = nd;
          sp.heap.emplace(nd, a.to);
        }
      }
      return true;
    }
    return false;
  }

  SubgraphId id_;
  std::shared_ptr<const Topology> topology_;
  std::shared_ptr<const GraphSnapshot> snapshot_;
  std::shared_ptr<const ObjectStore> objects_;
  WorkerOptions options_;

  // Intra-subgraph CSR over local indices; weights come from the snapshot.
  std::vector<std::size_t> offsets_;
  std::vector<Adjacent> adjacency_;
  std::vector<External> external_;          // grouped by local vertex
  std::vector<std::size_t> ext_offsets_;
  std::vector<const std::vector<MovingObject>*> live_objects_;
  std::vector<std::uint32_t> slot_of_;
  std::uint32_t slot_count_ = 0;

  std::unordered_map<std::uint32_t, Search> searches_;
  std::unordered_map<QueryId, QueryContext> queries_;
  WorkerCounters counters_;
  mutable std::vector<VertexId> scratch_sources_;
};

}  // namespace dknn
