#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"

using namespace dknn;
using dknn::testing::desk6;
using dknn::testing::make_runtime;
using dknn::testing::reference_knn;

namespace {

RuntimeConfig config(Mode mode, std::uint64_t seed, SchedulerKind kind = SchedulerKind::Deterministic,
                     unsigned tau = 1) {
  RuntimeConfig c;
  c.mode = mode;
  c.seed = seed;
  c.scheduler = kind;
  c.tau = tau;
  return c;
}

void expect_exactly_once(const Runtime& rt) {
  auto c = rt.delivery_counters();
  EXPECT_EQ(c.sent, c.received);
}

}  // namespace

TEST(Runtime, Desk6GoldenAllModes) {
  for (Mode mode : {Mode::PR, Mode::EH, Mode::BC}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto rt = make_runtime(desk6(), config(mode, seed));
      std::vector<QuerySpec> qs{{0, 1}, {0, 2}};
      auto b = rt->run_until_quiescent(qs);
      EXPECT_EQ(b.results[0].neighbors, (std::vector<Neighbor>{{2, 2.5}}));
      EXPECT_EQ(b.results[1].neighbors, (std::vector<Neighbor>{{2, 2.5}, {1, 8}}));
      std::vector<WeightUpdate> ups{{2, 3, 3}};
      rt->snapshot_barrier(ups, {});
      std::vector<QuerySpec> q2{{0, 2}};
      b = rt->run_until_quiescent(q2);
      EXPECT_EQ(b.results[0].neighbors, (std::vector<Neighbor>{{2, 2.5}, {1, 10}}));
      EXPECT_EQ(rt->snapshot().version(), 1u);
      expect_exactly_once(*rt);
      EXPECT_EQ(rt->watchdog_fired(), 0u);
    }
  }
}

TEST(Runtime, MatchesReferenceOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto inst = make_random_instance(seed);
    for (Mode mode : {Mode::PR, Mode::EH, Mode::BC}) {
      auto cfg = config(mode, seed);
      cfg.fifo_per_pair = seed % 2 == 1;
      Runtime rt(inst.graph, inst.topology, inst.objects, cfg);
      auto b = rt.run_until_quiescent(inst.queries);
      for (std::size_t i = 0; i < inst.queries.size(); ++i) {
        const auto& q = inst.queries[i];
        EXPECT_EQ(distance_multiset(b.results[i].neighbors), reference_knn(*inst.graph, *inst.objects, q.v_q, q.k))
            << "seed " << seed << " mode " << to_string(mode);
        EXPECT_LE(b.results[i].metrics.subgraphs_visited, inst.m);
      }
      expect_exactly_once(rt);
    }
  }
}

TEST(Runtime, ConcurrentSchedulerMatchesReference) {
  for (unsigned tau : {1u, 2u, 3u, 8u}) {
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
      auto inst = make_random_instance(seed);
      Runtime rt(inst.graph, inst.topology, inst.objects, config(Mode::PR, seed, SchedulerKind::Concurrent, tau));
      EXPECT_EQ(rt.executor_count(), tau);
      auto b = rt.run_until_quiescent(inst.queries);
      for (std::size_t i = 0; i < inst.queries.size(); ++i) {
        const auto& q = inst.queries[i];
        EXPECT_EQ(distance_multiset(b.results[i].neighbors), reference_knn(*inst.graph, *inst.objects, q.v_q, q.k));
      }
      expect_exactly_once(rt);
    }
  }
}

TEST(Runtime, BarrierAppliesObjectMoves) {
  auto d = desk6();
  auto rt = make_runtime(d, config(Mode::PR, 1, SchedulerKind::Concurrent, 2));
  std::vector<MovingObject> moves{{1, 2, 0.25}};
  rt->snapshot_barrier({}, moves);
  std::vector<QuerySpec> qs{{0, 2}};
  auto b = rt->run_until_quiescent(qs);
  EXPECT_EQ(b.results[0].neighbors, (std::vector<Neighbor>{{2, 2.5}, {1, 4.25}}));
  // The store the runtime started with is untouched.
  EXPECT_EQ(d.objects->get(1).live_vertex, 4u);
}

TEST(Runtime, RejectedUpdateLeavesSnapshotInPlace) {
  auto rt = make_runtime(desk6(), config(Mode::PR, 1));
  std::vector<WeightUpdate> bad{{0, 2, 1}};
  EXPECT_THROW(rt->snapshot_barrier(bad, {}), UpdateError);
  EXPECT_EQ(rt->snapshot().version(), 0u);
  std::vector<QuerySpec> qs{{0, 1}};
  EXPECT_EQ(rt->run_until_quiescent(qs).results[0].neighbors.size(), 1u);
}

TEST(Runtime, WrongEpsilonIsCaughtByDifferentialCheck) {
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto inst = make_random_instance(seed);
    auto cfg = config(Mode::BC, seed);
    cfg.faults.epsilon_scale = 0.5;
    Runtime rt(inst.graph, inst.topology, inst.objects, cfg);
    auto b = rt.run_until_quiescent(inst.queries);
    for (std::size_t i = 0; i < inst.queries.size(); ++i) {
      const auto& q = inst.queries[i];
      mismatches += distance_multiset(b.results[i].neighbors) != reference_knn(*inst.graph, *inst.objects, q.v_q, q.k);
    }
  }
  EXPECT_GT(mismatches, 0u);
}

TEST(Runtime, TraceRecordsEveryDelivery) {
  auto path = std::filesystem::temp_directory_path() / "dknn_trace.txt";
  auto cfg = config(Mode::PR, 3);
  cfg.trace_path = path.string();
  std::uint64_t deliveries = 0;
  {
    auto rt = make_runtime(desk6(), cfg);
    std::vector<QuerySpec> qs{{0, 2}};
    rt->run_until_quiescent(qs);
    deliveries = rt->deliveries();
  }
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line))
    if (!line.starts_with("#")) ++lines;
  EXPECT_EQ(lines, deliveries);
  EXPECT_GT(lines, 0u);
}

TEST(Runtime, RejectsZeroExecutors) {
  EXPECT_THROW(make_runtime(desk6(), config(Mode::PR, 0, SchedulerKind::Concurrent, 0)), ValidationError);
}
