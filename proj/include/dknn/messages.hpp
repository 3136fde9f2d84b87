#pragma once

// Records exchanged between the coordinator and the subgraph workers.

#include <compare>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

#include "dknn/objects.hpp"
#include "dknn/road_graph.hpp"
#include "dknn/types.hpp"

namespace dknn {

// One outstanding exploration path <q, from -> to>. `seq` tells apart repeated
// dispatches on the same (from, to) pair within a query.
struct AckToken {
  QueryId qid = 0;
  SubgraphId from_sg = kCoordinatorId;
  SubgraphId to_sg = 0;
  std::uint64_t seq = 0;

  bool is_root() const noexcept { return from_sg == kCoordinatorId; }
  friend auto operator<=>(const AckToken&, const AckToken&) = default;
};

struct BorderEntry {
  VertexId vertex = 0;  // border vertex of the destination (or v_q for the root)
  Cost dist = 0;        // best known D(v_q, vertex)

  friend bool operator==(const BorderEntry&, const BorderEntry&) = default;
};

struct QueryMessage {
  QueryId qid = 0;
  std::vector<BorderEntry> entries;
  SubgraphId from = kCoordinatorId;
  SubgraphId to = 0;
  Version version = 0;
  std::uint32_t k = 1;
  Cost bound = kInfinity;  // sender's upper bound on the k-th distance
  AckToken token;
};

struct Candidate {
  ObjectId object = 0;
  Cost dist = 0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct EpsilonUpdate {
  QueryId qid = 0;
  Cost epsilon = kInfinity;  // 0 stops the subgraph for this query
};

// Everything a worker reports to the coordinator after handling one query
// message: the candidates it found, a dispatch notice for every message it
// sent, and the acknowledgment of the message it handled. The coordinator
// applies them in that order, so a notice is always registered no later than
// the acknowledgment of its parent.
struct WorkerReport {
  QueryId qid = 0;
  SubgraphId sg = 0;
  AckToken ack;
  std::vector<Candidate> candidates;
  std::vector<AckToken> notices;
  bool explored = false;  // at least one entry survived the ISE entry test
  bool stale = false;     // message carried another snapshot version
  std::uint32_t dijkstra_runs = 0;
  std::uint32_t cache_hits = 0;
  std::uint64_t settled = 0;
};

// Sent to every subgraph that heard about a query once it has terminated.
struct QueryClosed {
  QueryId qid = 0;
};

struct SnapshotAdvance {
  std::shared_ptr<const GraphSnapshot> snapshot;
  std::shared_ptr<const ObjectStore> objects;
};

using Payload = std::variant<QueryMessage, EpsilonUpdate, WorkerReport, QueryClosed, SnapshotAdvance>;

inline std::string_view payload_kind(const Payload& p) {
  constexpr std::string_view names[] = {"query", "epsilon", "report", "close", "advance"};
  return names[p.index()];
}

inline QueryId payload_qid(const Payload& p) {
  return std::visit(
      [](const auto& v) -> QueryId {
        if constexpr (requires { v.qid; })
          return v.qid;
        else
          return 0;
      },
      p);
}

// Address kCoordinatorId is the coordinator; anything else is a subgraph worker.
struct Envelope {
  SubgraphId src = kCoordinatorId;
  SubgraphId dst = kCoordinatorId;
  Payload payload;
};

using Outbox = std::vector<Envelope>;

}  // namespace dknn
