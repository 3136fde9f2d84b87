// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
// Set DKNN_NY_GR / DKNN_NY_CO to run criterion 5 on the real NY DIMACS files;
// otherwise a synthetic network of the same size is generated.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"

using namespace dknn;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name << " (" << detail << ")"
            << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

RuntimeConfig config(Mode mode, std::uint64_t seed, SchedulerKind kind = SchedulerKind::Deterministic,
                     unsigned tau = 1) {
  RuntimeConfig c;
  c.mode = mode;
  c.seed = seed;
  c.scheduler = kind;
  c.tau = tau;
  return c;
}

// Every query of the runtime's current snapshot ended with an empty buffer.
bool buffers_drained(const Runtime& rt, const std::vector<QueryResult>& results) {
  for (const auto& r : results) {
    const auto& s = rt.coordinator().state(r.qid);
    if (s.status != QueryState::Status::Finished || !s.root_acked || !s.acks.pending().empty() ||
        !s.acks.early_acks().empty())
      return false;
  }
  return true;
}

struct Grid {
  std::shared_ptr<const GraphSnapshot> graph;
  std::shared_ptr<const Topology> topology;
  std::shared_ptr<const ObjectStore> objects;
};

Grid make_grid_workload(std::size_t mu, std::uint64_t seed) {
  Grid g;
  g.graph = std::make_shared<GraphSnapshot>(make_grid(224, 224, seed));
  auto part = partition_rcb(*g.graph, 64, seed);
  g.topology = std::make_shared<Topology>(derive_topology(*g.graph, part));
  g.objects = std::make_shared<ObjectStore>(generate_quantized_objects(*g.graph, part, mu, seed + 1));
  return g;
}

// ---- 1 and 2 ----

struct RandomSweep {
  std::size_t instances = 0, queries = 0, mismatches = 0, undrained = 0, watchdog = 0;
  double seconds = 0;
  std::string first_mismatch;
};

RandomSweep random_sweep() {
  RandomSweep s;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    auto inst = make_random_instance(seed);
    ++s.instances;
    std::vector<std::vector<Cost>> expected;
    for (const auto& q : inst.queries) {
      auto ine = distance_multiset(ine_knn(*inst.graph, *inst.objects, q.v_q, q.k).neighbors);
      auto brute = distance_multiset(brute_knn(*inst.graph, *inst.objects, q.v_q, q.k).neighbors);
      if (ine != brute) ++s.mismatches;
      expected.push_back(std::move(ine));
      ++s.queries;
    }
    for (Mode mode : {Mode::PR, Mode::EH, Mode::BC}) {
      Runtime rt(inst.graph, inst.topology, inst.objects, config(mode, seed));
      BatchResult b;
      try {
        b = rt.run_until_quiescent(inst.queries);
      } catch (const ProtocolViolation&) {
        ++s.watchdog;
        continue;
      }
      if (!buffers_drained(rt, b.results)) ++s.undrained;
      for (std::size_t i = 0; i < inst.queries.size(); ++i) {
        if (distance_multiset(b.results[i].neighbors) == expected[i]) continue;
        if (s.mismatches++ == 0)
          s.first_mismatch = "seed " + std::to_string(seed) + " mode " + to_string(mode) + " query " +
                             std::to_string(i);
      }
    }
  }
  s.seconds = seconds_since(t0);
  return s;
}

struct Desk6Sweep {
  std::size_t runs = 0, undrained = 0, watchdog = 0, wrong = 0;
};

Desk6Sweep desk6_sweep() {
  Desk6Sweep s;
  const std::vector<QuerySpec> qs{{0, 1}, {0, 2}};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (Mode mode : {Mode::PR, Mode::EH, Mode::BC}) {
      auto cfg = config(mode, seed);
      cfg.fifo_per_pair = seed % 2 == 1;
      auto rt = dknn::testing::make_runtime(dknn::testing::desk6(), cfg);
      ++s.runs;
      try {
        auto b = rt->run_until_quiescent(qs);
        if (!buffers_drained(*rt, b.results)) ++s.undrained;
        if (b.results[1].neighbors != std::vector<Neighbor>{{2, 2.5}, {1, 8}}) ++s.wrong;
      } catch (const ProtocolViolation&) {
        ++s.watchdog;
      }
      s.watchdog += rt->watchdog_fired();
    }
  }
  return s;
}

// ---- 3 and 7 ----

struct ModeRun {
  std::vector<QueryResult> results;
  double seconds = 0;
};

ModeRun run_mode(const Grid& g, Mode mode, const std::vector<QuerySpec>& qs, std::uint64_t seed) {
  Runtime rt(g.graph, g.topology, g.objects, config(mode, seed));
  auto b = rt.run_until_quiescent(qs);
  // Each (subgraph, source) pair ran Dijkstra at most once in this snapshot.
  for (SubgraphId s = 0; s < rt.worker_count(); ++s)
    if (rt.worker(s).counters().dijkstra_runs != rt.worker(s).dijkstra_cache_size())
      throw ContractViolation("worker " + std::to_string(s) + " recomputed a cached source");
  return {std::move(b.results), b.wall_seconds};
}

std::size_t median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0 : v[v.size() / 2];
}

// ---- 5 ----

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
}

template <typename F>
double median_seconds(int reps, F&& f) {
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

int main() {
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);

  // 1 + 2: random instances.
  const auto sweep = random_sweep();
  {
    std::ostringstream d;
    d << sweep.instances << " instances, " << sweep.queries << " queries x 5 methods, mismatches "
      << sweep.mismatches << ", " << sweep.seconds << " s";
    if (!sweep.first_mismatch.empty()) d << ", first at " << sweep.first_mismatch;
    report(1, "oracle equivalence on random instances",
           sweep.instances >= 500 && sweep.mismatches == 0 && sweep.seconds < 120, d.str());
  }
  {
    const auto desk = desk6_sweep();
    std::ostringstream d;
    d << "random: undrained " << sweep.undrained << ", watchdog " << sweep.watchdog << "; desk6: " << desk.runs
      << " runs over 100 seeds, undrained " << desk.undrained << ", watchdog " << desk.watchdog << ", wrong "
      << desk.wrong;
    report(2, "termination with empty ack buffers",
           sweep.undrained + sweep.watchdog + desk.undrained + desk.watchdog + desk.wrong == 0, d.str());
  }

  // 3: pruning on the 50k grid.
  const auto t3 = Clock::now();
  const auto grid = make_grid_workload(2000, 7);
  const auto qs = generate_queries(*grid.graph, 200, 30, 30, 8);
  ModeRun pr, eh, bc;
  std::string c3_error;
  try {
    pr = run_mode(grid, Mode::PR, qs, 1);
    eh = run_mode(grid, Mode::EH, qs, 1);
    bc = run_mode(grid, Mode::BC, qs, 1);
  } catch (const std::exception& e) {
    c3_error = e.what();
  }
  {
    std::size_t msg_ok = 0, eps_ok = 0, same = 0;
    std::uint64_t msgs[3] = {0, 0, 0}, eps[3] = {0, 0, 0};
    for (std::size_t i = 0; c3_error.empty() && i < qs.size(); ++i) {
      const auto &a = pr.results[i].metrics, &b = eh.results[i].metrics, &c = bc.results[i].metrics;
      msg_ok += a.messages_sent <= b.messages_sent;
      eps_ok += a.eps_broadcasts < c.eps_broadcasts;
      const auto d = distance_multiset(pr.results[i].neighbors);
      same += d == distance_multiset(eh.results[i].neighbors) && d == distance_multiset(bc.results[i].neighbors) &&
              d == distance_multiset(ine_knn(*grid.graph, *grid.objects, qs[i].v_q, qs[i].k).neighbors);
      msgs[0] += a.messages_sent, msgs[1] += b.messages_sent, msgs[2] += c.messages_sent;
      eps[0] += a.eps_broadcasts, eps[1] += b.eps_broadcasts, eps[2] += c.eps_broadcasts;
    }
    const double secs = seconds_since(t3);
    const double n = static_cast<double>(qs.size());
    std::ostringstream d;
    if (!c3_error.empty()) d << "error: " << c3_error << "; ";
    d << "messages PR<=EH " << msg_ok << "/" << qs.size() << ", eps PR<BC " << eps_ok << "/" << qs.size()
      << ", identical " << same << "/" << qs.size() << "; totals messages pr/eh/bc " << msgs[0] << "/" << msgs[1]
      << "/" << msgs[2] << ", eps " << eps[0] << "/" << eps[1] << "/" << eps[2] << ", " << secs << " s";
    report(3, "pruning safety and benefit on 50k grid",
           c3_error.empty() && msg_ok >= 0.95 * n && eps_ok >= 0.95 * n && same == qs.size() && secs < 300, d.str());
  }

  // 4: Dijkstra cache reuse on DESK-6 (both queries enter SG1 at v4).
  {
    auto rt = dknn::testing::make_runtime(dknn::testing::desk6(), config(Mode::PR, 5));
    const std::vector<QuerySpec> one{{0, 2}};
    const auto& w1 = rt->worker(1);
    rt->run_until_quiescent(one);
    const auto after_first = w1.counters().dijkstra_runs;
    const bool cached = w1.has_cached_source(3);
    rt->run_until_quiescent(one);
    const auto after_second = w1.counters().dijkstra_runs;
    rt->snapshot_barrier({}, {});
    const bool reset = !rt->worker(1).has_cached_source(3);
    rt->run_until_quiescent(one);
    const auto after_third = rt->worker(1).counters().dijkstra_runs;
    std::ostringstream d;
    d << "SG1 runs after q1/q2/q3: " << after_first << "/" << after_second << "/" << after_third
      << ", cache cleared at barrier " << (reset ? "yes" : "no") << "; grid: every worker ran each source once "
      << (c3_error.empty() ? "yes" : "no");
    report(4, "Dijkstra cache reuse and reset",
           after_first == 1 && cached && after_second == 1 && reset && after_third == 2 && c3_error.empty(), d.str());
  }

  // 5: update cost on a NY-sized network.
  {
    std::shared_ptr<const GraphSnapshot> ny;
    std::string source = "synthetic 264346/733846";
    const char* gr = std::getenv("DKNN_NY_GR");
    const char* co = std::getenv("DKNN_NY_CO");
    if (gr && co) {
      ny = std::make_shared<GraphSnapshot>(load_dimacs(gr, co));
      source = gr;
    } else {
      ny = std::make_shared<GraphSnapshot>(make_road_like(264346, 733846, 3));
    }
    std::vector<double> x, y;
    bool shared = true;
    for (double alpha : {0.01, 0.05, 0.10, 0.20}) {
      const auto ups = generate_updates(*ny, alpha, static_cast<std::uint64_t>(alpha * 1000));
      GraphSnapshot next = *ny;
      const double t = median_seconds(7, [&] { next = ny->apply_updates(ups); });
      shared &= next.coords().data() == ny->coords().data() && next.neighbors(0).data() == ny->neighbors(0).data();
      x.push_back(static_cast<double>(ups.size()));
      y.push_back(t * 1000);
    }
    // Full barrier through a 300-subgraph runtime at 1%.
    auto part = partition_rcb(*ny, 300, 1);
    auto topo = std::make_shared<Topology>(derive_topology(*ny, part));
    auto objs = std::make_shared<ObjectStore>(generate_quantized_objects(*ny, part, 30000, 2));
    Runtime rt(ny, topo, objs, config(Mode::PR, 1));
    const auto ups = generate_updates(*ny, 0.01, 99);
    const auto tb = Clock::now();
    rt.snapshot_barrier(ups, {});
    const double barrier_ms = seconds_since(tb) * 1000;
    shared &= &rt.topology() == topo.get();
    const double r2 = r_squared(x, y);
    std::ostringstream d;
    d << source << "; ms at 1/5/10/20%: " << y[0] << "/" << y[1] << "/" << y[2] << "/" << y[3] << ", R^2 " << r2
      << ", barrier at 1% " << barrier_ms << " ms, structure shared " << (shared ? "yes" : "no");
    report(5, "update cost linear in changed edges", r2 >= 0.9 && y[0] < 100 && shared, d.str());
  }

  // 6: schedule independence and tau scaling, 50 queries on the grid.
  {
    const auto q50 = generate_queries(*grid.graph, 50, 30, 30, 9);
    std::vector<std::vector<Cost>> reference;
    for (const auto& q : q50)
      reference.push_back(distance_multiset(ine_knn(*grid.graph, *grid.objects, q.v_q, q.k).neighbors));
    auto matches = [&](const BatchResult& b) {
      for (std::size_t i = 0; i < q50.size(); ++i)
        if (distance_multiset(b.results[i].neighbors) != reference[i]) return false;
      return true;
    };
    std::size_t det_ok = 0, conc_ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Runtime rt(grid.graph, grid.topology, grid.objects, config(Mode::PR, 100 + seed));
      det_ok += matches(rt.run_until_quiescent(q50));
    }
    const unsigned taus[] = {1, 2, 4, 8};
    for (std::size_t i = 0; i < 10; ++i) {
      Runtime rt(grid.graph, grid.topology, grid.objects, config(Mode::PR, i, SchedulerKind::Concurrent, taus[i % 4]));
      conc_ok += matches(rt.run_until_quiescent(q50));
    }
    // Best of several fresh runtimes per tau (each starts with a cold cache).
    auto throughput = [&](unsigned tau) {
      double best = 0;
      for (int rep = 0; rep < 5; ++rep) {
        Runtime rt(grid.graph, grid.topology, grid.objects, config(Mode::PR, rep, SchedulerKind::Concurrent, tau));
        best = std::max(best, static_cast<double>(q50.size()) / rt.run_until_quiescent(q50).wall_seconds);
      }
      return best;
    };
    const double tp1 = throughput(1), tp8 = throughput(8);
    std::ostringstream d;
    d << "deterministic " << det_ok << "/10, concurrent " << conc_ok << "/10, throughput tau=1 " << tp1
      << " q/s, tau=8 " << tp8 << " q/s, hardware threads " << std::thread::hardware_concurrency();
    report(6, "schedule independence and tau scaling", det_ok == 10 && conc_ok == 10 && tp8 >= tp1, d.str());
  }

  // 7: complexity counters on the criterion-3 workload, and D under dense objects.
  {
    const auto max_sg = grid.topology->max_subgraph_size();
    std::size_t within = 0, d_ok = 0, total = 0;
    std::uint64_t worst_ratio_num = 0, worst_ratio_den = 1;
    for (const auto* run : {&pr, &eh, &bc}) {
      for (const auto& r : run->results) {
        ++total;
        const auto D = r.metrics.subgraphs_visited;
        within += r.metrics.settled <= D * max_sg;
        d_ok += D <= grid.topology->subgraphs.size();
        if (r.metrics.settled * worst_ratio_den > worst_ratio_num * std::max<std::uint64_t>(D * max_sg, 1)) {
          worst_ratio_num = r.metrics.settled;
          worst_ratio_den = std::max<std::uint64_t>(D * max_sg, 1);
        }
      }
    }
    const auto dense = make_grid_workload(200000, 7);
    const auto dense_run = run_mode(dense, Mode::PR, qs, 2);
    std::vector<std::size_t> ds;
    for (const auto& r : dense_run.results) ds.push_back(r.metrics.subgraphs_visited);
    const auto med = median(ds);
    std::ostringstream d;
    d << "settled <= D*" << max_sg << " for " << within << "/" << total << " (worst settled/(D*max) "
      << static_cast<double>(worst_ratio_num) / static_cast<double>(worst_ratio_den) << "), D <= m for " << d_ok
      << "/" << total << ", median D with mu=200000: " << med;
    report(7, "complexity counter sanity", total > 0 && within == total && d_ok == total && med == 1, d.str());
  }

  // 8: DESK-6 golden results.
  {
    const auto desk = dknn::testing::desk6();
    std::vector<WeightUpdate> ups{{2, 3, 3}};
    const auto updated = desk.graph->apply_updates(ups);
    // Oracle side: Bellman-Ford derived values must equal the golden literals.
    bool oracle_ok = dknn::testing::reference_knn(*desk.graph, *desk.objects, 0, 1) == std::vector<Cost>{2.5} &&
                     dknn::testing::reference_knn(*desk.graph, *desk.objects, 0, 2) == std::vector<Cost>{2.5, 8} &&
                     dknn::testing::reference_knn(updated, *desk.objects, 0, 2) == std::vector<Cost>{2.5, 10};
    std::size_t ok = 0, runs = 0;
    for (Mode mode : {Mode::PR, Mode::EH, Mode::BC}) {
      for (auto kind : {SchedulerKind::Deterministic, SchedulerKind::Concurrent}) {
        ++runs;
        auto rt = dknn::testing::make_runtime(desk, config(mode, 3, kind, 2));
        const std::vector<QuerySpec> before{{0, 1}, {0, 2}};
        auto b = rt->run_until_quiescent(before);
        rt->snapshot_barrier(ups, {});
        const std::vector<QuerySpec> after{{0, 2}};
        auto a = rt->run_until_quiescent(after);
        ok += b.results[0].neighbors == std::vector<Neighbor>{{2, 2.5}} &&
              b.results[1].neighbors == std::vector<Neighbor>{{2, 2.5}, {1, 8}} &&
              a.results[0].neighbors == std::vector<Neighbor>{{2, 2.5}, {1, 10}};
      }
    }
    std::ostringstream d;
    d << "oracle " << (oracle_ok ? "agrees" : "disagrees") << ", runtime exact in " << ok << "/" << runs
      << " mode/scheduler combinations";
    report(8, "DESK-6 golden results", oracle_ok && ok == runs, d.str());
  }

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
