#pragma once

// The query unit. Collects candidates into a k-best queue, maintains the upper
// bound epsilon, prunes subgraphs whose coordinate lower bound exceeds it, and
// decides termination by matching dispatch notices against acknowledgments.

#include <algorithm>
#include <chrono>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dknn/kbest.hpp"
#include "dknn/messages.hpp"
#include "dknn/oracle.hpp"
#include "dknn/partitioner.hpp"

namespace dknn {

enum class Mode {
  PR,  // bounds to the effective subgraph set only, kill pruned subgraphs
  EH,  // no bounds at all
  BC,  // every bound broadcast to all subgraphs
};

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::PR: return "pr";
    case Mode::EH: return "eh";
    case Mode::BC: return "bc";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "pr") return Mode::PR;
  if (s == "eh") return Mode::EH;
  if (s == "bc") return Mode::BC;
  throw ValidationError("unknown mode `" + s + "` (expected pr, eh or bc)");
}

// Dispatch notices and acknowledgments annihilate pairwise regardless of the
// order they arrive in.
class AckBuffer {
 public:
  void notice(const AckToken& t) {
    ++notices_;
    if (auto it = early_.find(t); it != early_.end()) {
      early_.erase(it);
      ++matched_;
      return;
    }
    pending_.insert(t);
  }

  // Returns true if the ack matched a pending token.
  bool ack(const AckToken& t) {
    ++acks_;
    if (auto it = pending_.find(t); it != pending_.end()) {
      pending_.erase(it);
      ++matched_;
      return true;
    }
    early_.insert(t);
    ++early_total_;
    return false;
  }

  bool empty() const noexcept { return pending_.empty() && early_.empty(); }
  const std::multiset<AckToken>& pending() const noexcept { return pending_; }
  const std::multiset<AckToken>& early_acks() const noexcept { return early_; }
  std::uint64_t notices_received() const noexcept { return notices_; }
  std::uint64_t acks_received() const noexcept { return acks_; }
  std::uint64_t acks_matched() const noexcept { return matched_; }
  std::uint64_t early_total() const noexcept { return early_total_; }

 private:
  std::multiset<AckToken> pending_;
  std::multiset<AckToken> early_;
  std::uint64_t notices_ = 0;
  std::uint64_t acks_ = 0;
  std::uint64_t matched_ = 0;
  std::uint64_t early_total_ = 0;
};

struct QueryMetrics {
  std::uint64_t messages_sent = 0;   // inter-subgraph query messages
  std::uint64_t tokens_created = 0;  // messages_sent + the root token
  std::uint64_t eps_broadcasts = 0;  // epsilon updates sent, kills included
  std::uint64_t kills = 0;
  std::uint64_t eps_decreases = 0;
  std::uint64_t subgraphs_visited = 0;  // D
  std::uint64_t dijkstra_runs = 0;
  std::uint64_t settled = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t reports = 0;
  std::uint64_t candidates_received = 0;
  std::uint64_t early_acks = 0;
  std::uint64_t stale_reports = 0;
  double latency_us = 0;
};

struct QueryResult {
  QueryId qid = 0;
  VertexId v_q = 0;
  std::uint32_t k = 0;
  std::vector<Neighbor> neighbors;  // ascending distance, ties by object id
  bool insufficient = false;
  QueryMetrics metrics;
};

struct QueryState {
  enum class Status { Running, Finished };

  QueryId qid = 0;
  std::uint32_t k = 0;
  VertexId v_q = 0;
  KBest<ObjectId> queue{1};
  Cost epsilon = kInfinity;
  std::vector<Cost> euclid_table;    // per subgraph lower bound E(v_q, SG_p)
  bool effective_populated = false;
  std::vector<SubgraphId> effective;  // SG', descending by euclid_table
  std::vector<bool> in_effective;
  std::vector<bool> contacted;        // sent a message or bound for this query
  std::vector<bool> killed;
  std::vector<bool> visited;
  AckBuffer acks;
  bool root_acked = false;
  Status status = Status::Running;
  QueryMetrics metrics;
  std::chrono::steady_clock::time_point started;
  std::vector<Neighbor> result;
  bool insufficient = false;
};

// Test hook: scales every epsilon the coordinator sends. Anything below 1
// breaks correctness and must be caught by differential verification.
struct CoordinatorFaults {
  double epsilon_scale = 1.0;
};

// E(v_q, SG_p): minimum coordinate lower bound from v_q to any border vertex
// of SG_p; 0 for the subgraph holding v_q and for subgraphs without borders.
inline std::vector<Cost> compute_lb(const GraphSnapshot& g, const Topology& t, VertexId v_q) {
  std::vector<Cost> table(t.subgraphs.size(), 0);
  const Point q = g.coord(v_q);
  for (const auto& sg : t.subgraphs) {
    if (sg.id == t.subgraph_of(v_q) || sg.border_coords.empty()) continue;
    Cost best = kInfinity;
    for (const auto& p : sg.border_coords) best = std::min(best, g.lower_bound_from(q, p));
    table[sg.id] = best;
  }
  return table;
}

class Coordinator {
 public:
  Coordinator(std::shared_ptr<const Topology> topology, std::shared_ptr<const GraphSnapshot> snapshot,
              Mode mode, CoordinatorFaults faults = {})
      : topology_(std::move(topology)), snapshot_(std::move(snapshot)), mode_(mode), faults_(faults) {}

  Mode mode() const noexcept { return mode_; }
  Version version() const noexcept { return snapshot_->version(); }

  void submit_query(QueryId qid, VertexId v_q, std::uint32_t k, Outbox& out) {
    if (k == 0) throw ValidationError("k must be at least 1");
    if (v_q >= snapshot_->vertex_count())
      throw ValidationError("query vertex " + std::to_string(v_q) + " does not exist");
    if (queries_.contains(qid)) throw ValidationError("duplicate query id " + std::to_string(qid));
    const auto m = topology_->subgraphs.size();
    QueryState& q = queries_[qid];
    q.qid = qid;
    q.k = k;
    q.v_q = v_q;
    q.queue = KBest<ObjectId>(k);
    q.euclid_table = compute_lb(*snapshot_, *topology_, v_q);
    q.in_effective.assign(m, false);
    q.contacted.assign(m, false);
    q.killed.assign(m, false);
    q.visited.assign(m, false);
    q.started = std::chrono::steady_clock::now();
    ++running_;

    const SubgraphId home = topology_->subgraph_of(v_q);
    QueryMessage root;
    root.qid = qid;
    root.entries = {{v_q, 0}};
    root.from = kCoordinatorId;
    root.to = home;
    root.version = version();
    root.k = k;
    root.token = {qid, kCoordinatorId, home, 0};
    q.acks.notice(root.token);
    q.contacted[home] = true;
    ++q.metrics.tokens_created;
    out.push_back({kCoordinatorId, home, std::move(root)});
  }

  // Applies one worker report: candidates, then dispatch notices, then the ack.
  void on_report(const WorkerReport& r, Outbox& out) {
    auto it = queries_.find(r.qid);
    if (it == queries_.end() || it->second.status == QueryState::Status::Finished) {
      ++late_reports_;
      late_candidates_ += r.candidates.size();
      return;
    }
    QueryState& q = it->second;
    ++q.metrics.reports;
    if (r.stale) ++q.metrics.stale_reports;
    if (r.explored && !q.visited[r.sg]) {
      q.visited[r.sg] = true;
      ++q.metrics.subgraphs_visited;
    }
    q.metrics.dijkstra_runs += r.dijkstra_runs;
    q.metrics.settled += r.settled;
    q.metrics.cache_hits += r.cache_hits;
    on_candidates(q, r.candidates, out);
    for (const auto& t : r.notices) on_dispatch_notice(q, t, out);
    on_ack(q, r.ack, out);
  }

  void on_candidates(QueryId qid, std::span<const Candidate> cands, Outbox& out) {
    on_candidates(running_state(qid), cands, out);
  }
  void on_dispatch_notice(const AckToken& t, Outbox& out) { on_dispatch_notice(running_state(t.qid), t, out); }
  void on_ack(const AckToken& t, Outbox& out) {
    auto it = queries_.find(t.qid);
    if (it == queries_.end() || it->second.status == QueryState::Status::Finished) {
      ++late_acks_;
      return;
    }
    on_ack(it->second, t, out);
  }

  // Completed queries since the last call, in completion order.
  std::vector<QueryResult> take_finished() { return std::exchange(finished_, {}); }

  const QueryState& state(QueryId qid) const { return queries_.at(qid); }
  bool has_query(QueryId qid) const { return queries_.contains(qid); }
  std::size_t running() const noexcept { return running_; }
  std::uint64_t late_reports() const noexcept { return late_reports_; }
  std::uint64_t late_candidates() const noexcept { return late_candidates_; }
  std::uint64_t late_acks() const noexcept { return late_acks_; }

  std::vector<QueryId> running_queries() const {
    std::vector<QueryId> ids;
    for (const auto& [id, q] : queries_)
      if (q.status == QueryState::Status::Running) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  // Finished query state is dropped here; running queries forbid the switch.
  void advance_snapshot(std::shared_ptr<const GraphSnapshot> snapshot) {
    if (running_ > 0)
      throw ContractViolation("coordinator: " + std::to_string(running_) +
                              " quer(ies) still running at snapshot advance");
    snapshot_ = std::move(snapshot);
    queries_.clear();
  }

  // Human-readable state of unfinished queries, for the deadlock watchdog.
  std::string dump_running() const {
    std::string s;
    for (auto id : running_queries()) {
      const auto& q = queries_.at(id);
      s += "query " + std::to_string(id) + " v_q=" + std::to_string(q.v_q) + " k=" +
           std::to_string(q.k) + " root_acked=" + (q.root_acked ? "1" : "0") + " pending=[";
      for (const auto& t : q.acks.pending()) s += token_string(t) + " ";
      s += "] early=[";
      for (const auto& t : q.acks.early_acks()) s += token_string(t) + " ";
      s += "]\n";
    }
    return s;
  }

 private:
  static std::string token_string(const AckToken& t) {
    return "<" + std::to_string(t.qid) + "," +
           (t.is_root() ? std::string("C") : std::to_string(t.from_sg)) + "->" +
           std::to_string(t.to_sg) + "#" + std::to_string(t.seq) + ">";
  }

  QueryState& running_state(QueryId qid) {
    auto it = queries_.find(qid);
    if (it == queries_.end() || it->second.status != QueryState::Status::Running)
      throw ContractViolation("query " + std::to_string(qid) + " is not running");
    return it->second;
  }

  void send_epsilon(QueryState& q, SubgraphId sg, Cost eps, Outbox& out) {
    ++q.metrics.eps_broadcasts;
    q.contacted[sg] = true;
    out.push_back({kCoordinatorId, sg, EpsilonUpdate{q.qid, eps}});
  }

  void kill(QueryState& q, SubgraphId sg, Outbox& out) {
    if (q.killed[sg]) return;
    q.killed[sg] = true;
    ++q.metrics.kills;
    send_epsilon(q, sg, 0, out);
  }

  void on_candidates(QueryState& q, std::span<const Candidate> cands, Outbox& out) {
    q.metrics.candidates_received += cands.size();
    const Cost before = q.epsilon;
    for (const auto& c : cands) q.queue.offer(c.object, c.dist);
    const Cost after = q.queue.bound();
    if (!(after < before)) return;
    q.epsilon = after;
    ++q.metrics.eps_decreases;
    const Cost sent = after * faults_.epsilon_scale;
    const auto m = static_cast<SubgraphId>(topology_->subgraphs.size());

    switch (mode_) {
      case Mode::EH:
        break;
      case Mode::BC:
        for (SubgraphId s = 0; s < m; ++s) send_epsilon(q, s, sent, out);
        break;
      case Mode::PR: {
        std::vector<SubgraphId> pruned;
        if (!q.effective_populated) {
          q.effective_populated = true;
          for (SubgraphId s = 0; s < m; ++s) {
            if (q.euclid_table[s] <= q.epsilon) {
              q.effective.push_back(s);
              q.in_effective[s] = true;
            } else {
              pruned.push_back(s);
            }
          }
          std::stable_sort(q.effective.begin(), q.effective.end(), [&](SubgraphId a, SubgraphId b) {
            return q.euclid_table[a] > q.euclid_table[b];
          });
        } else {
          // Descending by lower bound: stop at the first survivor.
          auto keep = std::find_if(q.effective.begin(), q.effective.end(),
                                   [&](SubgraphId s) { return q.euclid_table[s] <= q.epsilon; });
          pruned.assign(q.effective.begin(), keep);
          q.effective.erase(q.effective.begin(), keep);
          for (auto s : pruned) q.in_effective[s] = false;
        }
        for (auto s : pruned)
          if (q.contacted[s]) kill(q, s, out);
        for (auto s : q.effective) send_epsilon(q, s, sent, out);
        break;
      }
    }
  }

  void on_dispatch_notice(QueryState& q, const AckToken& t, Outbox& out) {
    ++q.metrics.messages_sent;
    ++q.metrics.tokens_created;
    q.contacted[t.to_sg] = true;
    q.acks.notice(t);
    if (mode_ == Mode::PR && q.effective_populated && !q.in_effective[t.to_sg]) kill(q, t.to_sg, out);
  }

  void on_ack(QueryState& q, const AckToken& t, Outbox& out) {
    const bool matched = q.acks.ack(t);
    if (!matched) ++q.metrics.early_acks;
    if (matched && t.is_root()) q.root_acked = true;
    check_termination(q, out);
  }

  void check_termination(QueryState& q, Outbox& out) {
    if (q.status != QueryState::Status::Running || !q.root_acked || !q.acks.empty()) return;
    q.status = QueryState::Status::Finished;
    --running_;
    q.metrics.latency_us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - q.started).count();
    for (auto [obj, d] : q.queue.sorted()) q.result.push_back({obj, d});
    q.insufficient = q.result.size() < q.k;
    for (SubgraphId s = 0; s < q.contacted.size(); ++s)
      if (q.contacted[s]) out.push_back({kCoordinatorId, s, QueryClosed{q.qid}});
    finished_.push_back({q.qid, q.v_q, q.k, q.result, q.insufficient, q.metrics});
  }

  std::shared_ptr<const Topology> topology_;
  std::shared_ptr<const GraphSnapshot> snapshot_;
  Mode mode_;
  CoordinatorFaults faults_;
  std::unordered_map<QueryId, QueryState> queries_;
  std::vector<QueryResult> finished_;
  std::size_t running_ = 0;
  std::uint64_t late_reports_ = 0;
  std::uint64_t late_candidates_ = 0;
  std::uint64_t late_acks_ = 0;
};

}  // namespace dknn
