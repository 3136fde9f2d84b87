// dknn: prepare partitions, generate workloads, run and verify kNN batches.
//
// External files use 1-based vertex ids (DIMACS convention); part ids are 0-based.
#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "dknn/dknn.hpp"

using namespace dknn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
constexpr VertexId kDropped = std::numeric_limits<VertexId>::max();

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::ofstream open_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

// Rough resident size of the graph, partition and topology, in bytes.
std::size_t memory_estimate(const GraphSnapshot& g, const Topology& t) {
  std::size_t bytes = g.vertex_count() * (sizeof(Point) + sizeof(std::uint64_t) + sizeof(SubgraphId));
  bytes += g.edge_count() * (2 * (sizeof(VertexId) + sizeof(EdgeId)) + sizeof(Cost) + 2 * sizeof(VertexId));
  for (const auto& sg : t.subgraphs)
    bytes += sg.vertices.size() * sizeof(VertexId) + sg.border_vertices.size() * (sizeof(VertexId) + sizeof(Point)) +
             sg.external_edges.size() * sizeof(ExternalEdge);
  return bytes;
}

struct Inputs {
  std::string graph, coords, partition, objects, queries, updates, config;
  SubgraphId m = 300;
  std::size_t mu = 30000;
  std::uint64_t seed = 1;
};

struct Loaded {
  std::shared_ptr<const GraphSnapshot> graph;
  std::shared_ptr<const Topology> topology;
  std::shared_ptr<const ObjectStore> objects;
};

Loaded load(const Inputs& in) {
  Loaded l;
  l.graph = std::make_shared<const GraphSnapshot>(load_dimacs(in.graph, in.coords));
  const auto part = in.partition.empty() ? partition_rcb(*l.graph, in.m, in.seed)
                                         : import_partition(in.partition, *l.graph);
  l.topology = std::make_shared<const Topology>(derive_topology(*l.graph, part));
  l.objects = std::make_shared<const ObjectStore>(
      in.objects.empty() ? generate_quantized_objects(*l.graph, part, in.mu, in.seed) : load_objects(in.objects, part));
  return l;
}

void add_graph_options(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--graph", in.graph, "DIMACS .gr file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--coords", in.coords, "DIMACS .co file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", in.seed, "random seed");
}

void add_partition_options(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--partition", in.partition, "part id per vertex, one per line")->check(CLI::ExistingFile);
  cmd->add_option("--m", in.m, "subgraph count when no partition file is given")->check(CLI::PositiveNumber);
}

// ---- prepare ----

int cmd_prepare(const Inputs& in, const std::string& out_dir) {
  const auto t0 = Clock::now();
  auto g = load_dimacs(in.graph, in.coords);
  const auto load_ms = ms_since(t0);
  const auto t1 = Clock::now();
  const auto part = in.partition.empty() ? partition_rcb(g, in.m, in.seed) : import_partition(in.partition, g);
  const auto topo = derive_topology(g, part);
  const auto prep_ms = ms_since(t1);

  const fs::path dir(out_dir);
  auto pf = open_output(dir / "partition.txt");
  write_partition(part, pf);
  auto tf = open_output(dir / "topology.txt");
  write_topology_report(topo, tf);
  std::cout << "prepare: vertices=" << g.vertex_count() << " edges=" << g.edge_count() << " m=" << part.m
            << " gamma=" << g.gamma() << " load_ms=" << load_ms << " preprocess_ms=" << prep_ms
            << " memory_bytes=" << memory_estimate(g, topo) << '\n';
  return 0;
}

// ---- gen ----

struct GenOptions {
  std::size_t queries = 100;
  std::uint32_t k_lo = 30;
  std::uint32_t k_hi = 0;
  double alpha = 0;
  std::size_t batches = 1;
};

int cmd_gen(const Inputs& in, const GenOptions& o, const std::string& out_dir) {
  const auto g = load_dimacs(in.graph, in.coords);
  const auto part = in.partition.empty() ? partition_rcb(g, in.m, in.seed) : import_partition(in.partition, g);
  const std::uint32_t k_hi = o.k_hi ? o.k_hi : o.k_lo;
  if (k_hi < o.k_lo) throw ValidationError("--k-max must not be below --k");

  std::mt19937_64 rng(in.seed);
  const auto objects = generate_quantized_objects(g, part, in.mu, rng());
  const auto queries = generate_queries(g, o.queries, o.k_lo, k_hi, rng());

  const fs::path dir(out_dir);
  auto of = open_output(dir / "objects.txt");
  write_objects(objects.all(), of);
  auto qf = open_output(dir / "queries.txt");
  write_queries(queries, qf);
  if (o.alpha > 0) {
    std::vector<std::vector<WeightUpdate>> batches;
    auto current = std::make_shared<const GraphSnapshot>(g);
    for (std::size_t b = 0; b < o.batches; ++b) {
      batches.push_back(generate_updates(*current, o.alpha, rng()));
      current = std::make_shared<const GraphSnapshot>(current->apply_updates(batches.back()));
    }
    auto uf = open_output(dir / "updates.txt");
    write_update_stream(batches, uf);
  }
  std::cout << "gen: objects=" << objects.size() << " queries=" << queries.size() << " k=" << o.k_lo << ".." << k_hi
            << " alpha=" << o.alpha << '\n';
  return 0;
}

// ---- run ----

struct RunOptions {
  std::string mode = "pr";
  unsigned tau = 20;
  std::string scheduler = "concurrent";
  std::string out;
  double fault_epsilon_scale = 1.0;
};

std::vector<QueryResult> run_baseline(const GraphSnapshot& g, const ObjectStore& store,
                                      const std::vector<QuerySpec>& qs, QueryId& next_qid) {
  std::vector<QueryResult> rs;
  for (const auto& q : qs) {
    const auto t0 = Clock::now();
    auto o = ine_knn(g, store, q.v_q, q.k);
    QueryResult r;
    r.qid = next_qid++;
    r.v_q = q.v_q;
    r.k = q.k;
    r.neighbors = std::move(o.neighbors);
    r.insufficient = o.insufficient;
    r.metrics.settled = o.settled;
    r.metrics.latency_us = ms_since(t0) * 1000;
    rs.push_back(std::move(r));
  }
  return rs;
}

RuntimeConfig runtime_config(const Inputs& in, const RunOptions& o, bool mode_given, bool tau_given,
                             bool scheduler_given, bool seed_given) {
  RuntimeConfig c;
  c.mode = parse_mode(o.mode == "dijkstra-baseline" ? "pr" : o.mode);
  c.tau = o.tau;
  c.scheduler = o.scheduler == "deterministic" ? SchedulerKind::Deterministic : SchedulerKind::Concurrent;
  c.seed = in.seed;
  if (!in.config.empty()) {
    std::ifstream f(in.config);
    if (!f) throw Error("cannot open " + in.config);
    const auto file = parse_config(f, c, in.config);
    // Command-line flags win over the config file.
    if (!mode_given) c.mode = file.mode;
    if (!tau_given) c.tau = file.tau;
    if (!scheduler_given) c.scheduler = file.scheduler;
    if (!seed_given) c.seed = file.seed;
    c.fifo_per_pair = file.fifo_per_pair;
    c.trace_path = file.trace_path;
  }
  if (const char* t = std::getenv("DKNN_TRACE"); t && std::string(t) == "1" && c.trace_path.empty())
    c.trace_path = (o.out.empty() ? std::string("dknn") : o.out) + ".trace";
  c.faults.epsilon_scale = o.fault_epsilon_scale;
  return c;
}

int cmd_run(const Inputs& in, const RunOptions& o, const RuntimeConfig& cfg) {
  const auto l = load(in);
  const auto queries = read_queries(in.queries);
  for (const auto& q : queries)
    if (q.v_q >= l.graph->vertex_count()) throw ValidationError("query vertex out of range");
  std::vector<std::vector<WeightUpdate>> batches;
  if (!in.updates.empty()) batches = read_update_stream(in.updates);

  std::ofstream file;
  if (!o.out.empty()) file = open_output(o.out);
  std::ostream& out = o.out.empty() ? std::cout : file;
  write_csv_header(out);

  const bool baseline = o.mode == "dijkstra-baseline";
  const std::string label = baseline ? o.mode : to_string(cfg.mode);
  std::vector<QueryResult> all;
  auto emit = [&](std::vector<QueryResult> rs) {
    for (const auto& r : rs) write_csv_row(out, r, label);
    all.insert(all.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
  };

  if (baseline) {
    QueryId next = 1;
    auto g = l.graph;
    emit(run_baseline(*g, *l.objects, queries, next));
    for (const auto& b : batches) {
      const auto t0 = Clock::now();
      g = std::make_shared<const GraphSnapshot>(g->apply_updates(b));
      std::cerr << "barrier: version=" << g->version() << " updates=" << b.size() << " ms=" << ms_since(t0) << '\n';
      emit(run_baseline(*g, *l.objects, queries, next));
    }
  } else {
    Runtime rt(l.graph, l.topology, l.objects, cfg);
    emit(rt.run_until_quiescent(queries).results);
    for (const auto& b : batches) {
      const auto t0 = Clock::now();
      rt.snapshot_barrier(b, {});
      std::cerr << "barrier: version=" << rt.snapshot().version() << " updates=" << b.size()
                << " ms=" << ms_since(t0) << '\n';
      emit(rt.run_until_quiescent(queries).results);
    }
    if (rt.watchdog_fired()) std::cerr << "warning: deadlock watchdog fired " << rt.watchdog_fired() << " times\n";
  }
  write_csv_summary(out, summarize(all), label);
  return 0;
}

// ---- verify ----

struct Divergence {
  QuerySpec query;
  std::map<std::string, std::vector<Cost>> distances;
};

const char* const kMethods[] = {"pr", "eh", "bc", "ine", "brute"};

// Every method's distance multiset for each query; divergent queries only.
std::vector<Divergence> differential(const Loaded& l, const std::vector<QuerySpec>& qs, RuntimeConfig cfg) {
  std::map<std::string, std::vector<std::vector<Cost>>> got;
  for (const char* mode : {"pr", "eh", "bc"}) {
    cfg.mode = parse_mode(mode);
    Runtime rt(l.graph, l.topology, l.objects, cfg);
    for (const auto& r : rt.run_until_quiescent(qs).results) got[mode].push_back(distance_multiset(r.neighbors));
  }
  for (const auto& q : qs) {
    got["ine"].push_back(distance_multiset(ine_knn(*l.graph, *l.objects, q.v_q, q.k).neighbors));
    got["brute"].push_back(distance_multiset(brute_knn(*l.graph, *l.objects, q.v_q, q.k).neighbors));
  }
  std::vector<Divergence> bad;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    bool same = true;
    for (const char* m : kMethods) same = same && got[m][i] == got["brute"][i];
    if (same) continue;
    Divergence d{qs[i], {}};
    for (const char* m : kMethods) d.distances[m] = got[m][i];
    bad.push_back(std::move(d));
  }
  return bad;
}

void print_divergence(std::ostream& os, const Divergence& d) {
  os << "mismatch: v_q=" << d.query.v_q + 1 << " k=" << d.query.k << '\n';
  os.precision(17);
  for (const auto& [m, ds] : d.distances) {
    os << "  " << m << ':';
    for (auto x : ds) os << ' ' << x;
    os << '\n';
  }
}

struct Slice {
  Loaded instance;
  std::vector<QuerySpec> queries;
};

// Restricts the instance to the ball of `radius` around v_q and writes it as a
// standalone workload. Part ids are compacted but kept.
Slice write_repro(const Loaded& l, const Divergence& d, const std::vector<QuerySpec>& batch, Cost radius,
                  const fs::path& dir) {
  const auto& g = *l.graph;
  const auto sd = dijkstra_sssp(g, d.query.v_q);

  std::vector<VertexId> remap(g.vertex_count(), kDropped);
  std::vector<Point> coords;
  std::vector<SubgraphId> parts;
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    if (sd[v] > radius) continue;
    remap[v] = static_cast<VertexId>(coords.size());
    coords.push_back(g.coord(v));
    parts.push_back(l.topology->partition[v]);
  }
  std::vector<EdgeSpec> edges;
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.endpoints(e);
    if (remap[a] != kDropped && remap[b] != kDropped) edges.push_back({remap[a], remap[b], g.weight(e)});
  }
  std::map<SubgraphId, SubgraphId> compact;
  for (auto p : parts) compact.emplace(p, 0);
  SubgraphId next = 0;
  for (auto& [p, id] : compact) id = next++;
  PartitionMap part;
  part.m = next;
  for (auto p : parts) part.assignment.push_back(compact[p]);

  Loaded slice;
  std::vector<QuerySpec> queries;
  for (const auto& q : batch)
    if (remap[q.v_q] != kDropped) queries.push_back({remap[q.v_q], q.k});
  slice.graph = std::make_shared<const GraphSnapshot>(GraphSnapshot::build(coords, edges));
  slice.topology = std::make_shared<const Topology>(derive_topology(*slice.graph, part));
  ObjectStore store(part);
  std::vector<MovingObject> kept;
  for (const auto& o : l.objects->all()) {
    if (remap[o.live_vertex] == kDropped || sd[o.live_vertex] + o.remaining > radius) continue;
    kept.push_back({o.id, remap[o.live_vertex], o.remaining});
    store.insert(kept.back());
  }
  slice.objects = std::make_shared<const ObjectStore>(std::move(store));

  auto gr = open_output(dir / "repro.gr");
  auto co = open_output(dir / "repro.co");
  write_dimacs(*slice.graph, gr, co);
  auto pf = open_output(dir / "repro.part");
  write_partition(part, pf);
  auto of = open_output(dir / "repro.objects");
  write_objects(kept, of);
  auto qf = open_output(dir / "repro.queries");
  write_queries(queries, qf);
  auto rf = open_output(dir / "divergence.txt");
  print_divergence(rf, d);
  return {slice, queries};
}

int report_divergences(const Loaded& l, const std::vector<QuerySpec>& qs, const std::vector<Divergence>& bad,
                       const RuntimeConfig& cfg, const std::string& repro_dir) {
  for (const auto& d : bad) print_divergence(std::cerr, d);
  if (bad.empty()) return 0;
  const fs::path dir(repro_dir);
  const auto& d = bad.front();
  // The divergent query on the ball holding every method's answer first; the
  // whole batch on the whole instance if that loses the fault.
  Cost radius = 0;
  for (const auto& [m, ds] : d.distances) radius = std::max(radius, ds.size() == d.query.k ? ds.back() : kInfinity);
  auto slice = write_repro(l, d, {d.query}, radius, dir);
  bool again = !differential(slice.instance, slice.queries, cfg).empty();
  if (!again) {
    slice = write_repro(l, d, qs, kInfinity, dir);
    again = !differential(slice.instance, slice.queries, cfg).empty();
  }
  std::cerr << "repro written to " << dir.string() << " (" << slice.instance.graph->vertex_count() << " vertices, "
            << slice.instance.objects->size() << " objects, " << (again ? "reproduces" : "does not reproduce")
            << ")\n";
  return 1;
}

int cmd_verify(const Inputs& in, std::size_t random, RuntimeConfig cfg, const std::string& repro_dir) {
  cfg.trace_path.clear();
  if (random > 0) {
    std::size_t queries = 0;
    for (std::size_t i = 0; i < random; ++i) {
      auto inst = make_random_instance(in.seed + i);
      Loaded l{inst.graph, inst.topology, inst.objects};
      auto bad = differential(l, inst.queries, cfg);
      queries += inst.queries.size();
      if (!bad.empty()) {
        std::cerr << "instance seed " << in.seed + i << '\n';
        std::cout << "verify: FAIL at instance " << i << '\n';
        return report_divergences(l, inst.queries, bad, cfg, repro_dir);
      }
    }
    std::cout << "verify: PASS (" << random << " instances, " << queries << " queries, 5 methods)\n";
    return 0;
  }
  if (in.queries.empty()) throw ValidationError("verify needs --queries or --random");
  const auto l = load(in);
  const auto qs = read_queries(in.queries);
  for (const auto& q : qs)
    if (q.v_q >= l.graph->vertex_count()) throw ValidationError("query vertex out of range");
  const auto bad = differential(l, qs, cfg);
  std::cout << "verify: " << (bad.empty() ? "PASS" : "FAIL") << " (" << qs.size() << " queries, " << bad.size()
            << " mismatches)\n";
  return report_divergences(l, qs, bad, cfg, repro_dir);
}

// ---- report ----

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct ModeStats {
  std::vector<double> latency;
  std::uint64_t messages = 0, eps = 0, visited = 0, settled = 0;
  std::vector<std::string> results;  // by row order
};

int cmd_report(const std::vector<std::string>& files) {
  const auto columns = split(kCsvHeader, ',');
  std::map<std::string, ModeStats> modes;
  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#' || line.starts_with("summary,") || line == kCsvHeader) continue;
      const auto row = split(line, ',');
      if (row.size() != columns.size()) throw ParseError(path, lineno, "wrong column count");
      auto& s = modes[row[8]];
      try {
        s.latency.push_back(std::stod(row[7]));
        s.messages += std::stoull(row[4]);
        s.visited += std::stoull(row[6]);
        s.eps += std::stoull(row[9]);
        s.settled += std::stoull(row[11]);
      } catch (const std::logic_error&) {
        throw ParseError(path, lineno, "bad number");
      }
      s.results.push_back(row[1] + '@' + row[2] + '=' + row[3]);
    }
  }
  std::cout << "mode,queries,mean_latency_us,median_latency_us,total_messages,total_eps_broadcasts,mean_subgraphs,"
               "mean_settled\n";
  for (auto& [mode, s] : modes) {
    const double n = double(s.latency.size());
    std::sort(s.latency.begin(), s.latency.end());
    const auto c = s.latency.size();
    const double median = c == 0 ? 0 : c % 2 ? s.latency[c / 2] : 0.5 * (s.latency[c / 2 - 1] + s.latency[c / 2]);
    std::cout << mode << ',' << c << ',' << std::accumulate(s.latency.begin(), s.latency.end(), 0.0) / n << ','
              << median << ',' << s.messages << ',' << s.eps << ',' << double(s.visited) / n << ','
              << double(s.settled) / n << '\n';
  }
  // Result columns are compared as written; object ids break distance ties identically in every mode.
  if (modes.size() > 1) {
    const auto& first = modes.begin()->second.results;
    bool same = true;
    for (const auto& [mode, s] : modes) same = same && s.results == first;
    std::cout << "results identical across modes: " << (same ? "yes" : "no") << '\n';
    return same ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed kNN over moving objects on road networks"};
  app.require_subcommand(1);
  Inputs in;

  auto* prepare = app.add_subcommand("prepare", "partition a graph and write the topology report");
  std::string prepare_out;
  add_graph_options(prepare, in);
  add_partition_options(prepare, in);
  prepare->add_option("--out", prepare_out, "output directory")->required();

  auto* gen = app.add_subcommand("gen", "generate objects, queries and update batches");
  GenOptions go;
  std::string gen_out;
  add_graph_options(gen, in);
  add_partition_options(gen, in);
  gen->add_option("--queries", go.queries, "number of queries");
  gen->add_option("--k", go.k_lo, "k, or the low end of the k range")->check(CLI::PositiveNumber);
  gen->add_option("--k-max", go.k_hi, "high end of the k range");
  gen->add_option("--mu", in.mu, "number of objects")->check(CLI::PositiveNumber);
  gen->add_option("--alpha", go.alpha, "fraction of edges changed per update batch")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--batches", go.batches, "number of update batches");
  gen->add_option("--out", gen_out, "output directory")->required();

  RunOptions ro;
  auto add_run_options = [&](CLI::App* cmd) {
    add_graph_options(cmd, in);
    add_partition_options(cmd, in);
    cmd->add_option("--objects", in.objects, "object file; generated from --mu and --seed when absent")
        ->check(CLI::ExistingFile);
    cmd->add_option("--mu", in.mu, "number of generated objects")->check(CLI::PositiveNumber);
    cmd->add_option("--tau", ro.tau, "executor threads")->check(CLI::PositiveNumber);
    cmd->add_option("--scheduler", ro.scheduler, "deterministic or concurrent")
        ->check(CLI::IsMember({"deterministic", "concurrent"}));
    cmd->add_option("--config", in.config, "key=value runtime config")->check(CLI::ExistingFile);
    cmd->add_option("--fault-epsilon-scale", ro.fault_epsilon_scale)->group("");
  };

  auto* run = app.add_subcommand("run", "run a query workload and write metrics CSV");
  add_run_options(run);
  run->add_option("--queries", in.queries, "query file")->required()->check(CLI::ExistingFile);
  run->add_option("--updates", in.updates, "update batches applied between query rounds")->check(CLI::ExistingFile);
  run->add_option("--mode", ro.mode, "pr, eh, bc or dijkstra-baseline")
      ->check(CLI::IsMember({"pr", "eh", "bc", "dijkstra-baseline"}));
  run->add_option("--out", ro.out, "CSV output file (stdout when absent)");

  auto* verify = app.add_subcommand("verify", "compare every mode and both oracles");
  std::size_t random = 0;
  std::string repro_dir = "dknn_repro";
  add_run_options(verify);
  verify->add_option("--queries", in.queries, "query file")->check(CLI::ExistingFile);
  verify->add_option("--random", random, "check this many seeded random instances instead");
  verify->add_option("--out", repro_dir, "directory for the repro dump");
  // --graph/--coords are only needed for file workloads.
  verify->get_option("--graph")->required(false);
  verify->get_option("--coords")->required(false);

  auto* report = app.add_subcommand("report", "summarize metrics CSV files per mode");
  std::vector<std::string> csvs;
  report->add_option("csv", csvs, "metrics files")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) return cmd_prepare(in, prepare_out);
    if (*gen) return cmd_gen(in, go, gen_out);
    if (*report) return cmd_report(csvs);
    auto* cmd = *run ? run : verify;
    const auto cfg = runtime_config(in, ro, cmd == verify || cmd->count("--mode") > 0, cmd->count("--tau") > 0,
                                    cmd->count("--scheduler") > 0, cmd->count("--seed") > 0);
    if (*run) return cmd_run(in, ro, cfg);
    if (random == 0 && (in.graph.empty() || in.coords.empty())) {
      std::cerr << "verify: --graph and --coords are required unless --random is given\n";
      return 2;
    }
    return cmd_verify(in, random, cfg, repro_dir);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
