#pragma once

// Workload generation, synthetic road networks, metrics CSV and the key=value
// runtime config used by the command line tool and the test suites.
//
// Generated costs are multiples of 1/1024 so that every path sum is exact in
// double precision and distances compare bit-for-bit across summation orders.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dknn/dimacs.hpp"
#include "dknn/objects.hpp"
#include "dknn/runtime.hpp"

namespace dknn {

inline constexpr double kCostQuantum = 1.0 / 1024.0;

inline Cost quantize_cost(double x) {
  return std::max(kCostQuantum, std::ceil(x / kCostQuantum) * kCostQuantum);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }
inline std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  return lo + rng() % (hi - lo + 1);
}

struct Workload {
  std::vector<QuerySpec> queries;
  std::vector<std::vector<WeightUpdate>> update_batches;
  std::vector<std::vector<MovingObject>> move_batches;
  double alpha = 0;
  std::uint64_t seed = 0;
};

inline std::vector<QuerySpec> generate_queries(const GraphSnapshot& g, std::size_t count, std::uint32_t k_lo,
                                               std::uint32_t k_hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<QuerySpec> qs;
  qs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<VertexId>(rng() % g.vertex_count());
    const auto k = static_cast<std::uint32_t>(uniform_int(rng, k_lo, k_hi));
    qs.push_back({v, k});
  }
  return qs;
}

// alpha * |E| distinct edges, each weight scaled by uniform [0.5, 2.0].
inline std::vector<WeightUpdate> generate_updates(const GraphSnapshot& g, double alpha, std::uint64_t seed) {
  if (alpha < 0 || alpha > 1) throw ValidationError("alpha must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  const auto e = g.edge_count();
  const auto count = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(e)));
  // Floyd's sampling of `count` distinct edge ids.
  std::unordered_set<EdgeId> chosen;
  chosen.reserve(count * 2);
  std::vector<EdgeId> order;
  order.reserve(count);
  for (std::size_t j = e - count; j < e; ++j) {
    const auto t = static_cast<EdgeId>(rng() % (j + 1));
    const EdgeId pick = chosen.insert(t).second ? t : static_cast<EdgeId>(j);
    if (pick != t) chosen.insert(pick);
    order.push_back(pick);
  }
  std::vector<WeightUpdate> ups;
  ups.reserve(count);
  for (EdgeId id : order) {
    auto [a, b] = g.endpoints(id);
    ups.push_back({a, b, quantize_cost(g.weight(id) * uniform(rng, 0.5, 2.0))});
  }
  return ups;
}

inline std::vector<MovingObject> generate_moves(const GraphSnapshot& g, const ObjectStore& store,
                                                double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Cost hi = median_edge_weight(g);
  std::vector<MovingObject> moves;
  for (const auto& o : store.all()) {
    if (unit_uniform(rng) >= fraction) continue;
    const auto v = static_cast<VertexId>(rng() % g.vertex_count());
    moves.push_back({o.id, v, quantize_cost(unit_uniform(rng) * hi) - kCostQuantum});
  }
  return moves;
}

// Objects with quantized remaining costs (exactly representable sums).
inline ObjectStore generate_quantized_objects(const GraphSnapshot& g, const PartitionMap& p, std::size_t mu,
                                              std::uint64_t seed) {
  if (mu == 0) throw ValidationError("object count must be at least 1");
  std::mt19937_64 rng(seed);
  const Cost hi = median_edge_weight(g);
  ObjectStore store(p);
  for (std::size_t i = 0; i < mu; ++i) {
    const auto v = static_cast<VertexId>(rng() % g.vertex_count());
    store.insert({static_cast<ObjectId>(i), v, quantize_cost(unit_uniform(rng) * hi) - kCostQuantum});
  }
  return store;
}

// width x height unit grid with travel-cost weights uniform in [1, 2].
inline GraphSnapshot make_grid(std::uint32_t width, std::uint32_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Point> coords;
  coords.reserve(std::size_t{width} * height);
  for (std::uint32_t r = 0; r < height; ++r)
    for (std::uint32_t c = 0; c < width; ++c) coords.push_back({double(c), double(r)});
  std::vector<EdgeSpec> edges;
  auto id = [&](std::uint32_t c, std::uint32_t r) { return r * width + c; };
  for (std::uint32_t r = 0; r < height; ++r) {
    for (std::uint32_t c = 0; c < width; ++c) {
      if (c + 1 < width) edges.push_back({id(c, r), id(c + 1, r), quantize_cost(uniform(rng, 1.0, 2.0))});
      if (r + 1 < height) edges.push_back({id(c, r), id(c, r + 1), quantize_cost(uniform(rng, 1.0, 2.0))});
    }
  }
  return GraphSnapshot::build(std::move(coords), edges);
}

// Road-like stand-in with exactly `vertices` vertices and `edges` edges: a
// jittered grid filled row by row, topped up with random cell diagonals.
inline GraphSnapshot make_road_like(std::size_t vertices, std::size_t edges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto width = static_cast<std::uint32_t>(std::ceil(std::sqrt(double(vertices))));
  std::vector<Point> coords(vertices);
  for (std::size_t v = 0; v < vertices; ++v)
    coords[v] = {double(v % width) * 100 + uniform(rng, -20, 20), double(v / width) * 100 + uniform(rng, -20, 20)};
  std::vector<EdgeSpec> out;
  out.reserve(edges);
  auto add = [&](std::size_t a, std::size_t b) {
    const double d = euclid(coords[a], coords[b]);
    out.push_back({static_cast<VertexId>(a), static_cast<VertexId>(b), std::round(d * uniform(rng, 1.0, 1.5))});
  };
  for (std::size_t v = 0; v < vertices && out.size() < edges; ++v) {
    if ((v % width) + 1 < width && v + 1 < vertices) add(v, v + 1);
    if (v + width < vertices && out.size() < edges) add(v, v + width);
  }
  std::unordered_set<std::uint64_t> used;
  while (out.size() < edges) {
    const std::size_t v = rng() % vertices;
    const bool right_down = rng() & 1U;
    if ((v % width) + 1 >= width) continue;
    std::size_t a = v, b = 0;
    if (right_down) {
      b = v + width + 1;
    } else {
      if (v + width >= vertices) continue;
      a = v + 1;
      b = v + width;
    }
    if (b >= vertices) continue;
    if (!used.insert((std::uint64_t{a} << 32) | b).second) continue;
    add(a, b);
  }
  return GraphSnapshot::build(std::move(coords), out);
}

// A small random instance for differential testing: up to `max_vertices`
// random points, a random near-neighbour spanning structure plus extra local
// edges, weights within a factor of [0.5, 1.5] of the Euclidean length (so the
// admissibility factor stays at most 2).
struct RandomInstance {
  std::shared_ptr<const GraphSnapshot> graph;
  std::shared_ptr<const Topology> topology;
  std::shared_ptr<const ObjectStore> objects;
  std::vector<QuerySpec> queries;
  SubgraphId m = 0;
  std::size_t mu = 0;
};

inline RandomInstance make_random_instance(std::uint64_t seed, std::size_t max_vertices = 200,
                                           std::size_t queries = 3) {
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(uniform_int(rng, 8, max_vertices));
  std::vector<Point> coords(n);
  for (auto& p : coords) p = {uniform(rng, 0, 100), uniform(rng, 0, 100)};
  auto nearest = [&](std::size_t v, std::size_t limit, std::size_t count) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t u = 0; u < limit; ++u)
      if (u != v) d.emplace_back(euclid(coords[u], coords[v]), u);
    const auto c = std::min(count, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(c), d.end());
    d.resize(c);
    return d;
  };
  std::vector<EdgeSpec> edges;
  auto add = [&](std::size_t a, std::size_t b) {
    const double w = quantize_cost(euclid(coords[a], coords[b]) * uniform(rng, 0.5, 1.5));
    edges.push_back({static_cast<VertexId>(a), static_cast<VertexId>(b), w});
  };
  const bool disconnected = rng() % 10 == 0;
  for (std::size_t v = 1; v < n; ++v) {
    if (disconnected && rng() % 8 == 0) continue;
    auto near = nearest(v, v, 3);
    add(v, near[rng() % near.size()].second);
  }
  const auto extra = uniform_int(rng, 0, 2);
  for (std::size_t v = 0; v < n; ++v)
    for (auto [d, u] : nearest(v, n, extra)) add(v, u);

  RandomInstance inst;
  auto g = std::make_shared<GraphSnapshot>(GraphSnapshot::build(std::move(coords), edges));
  inst.m = static_cast<SubgraphId>(uniform_int(rng, 2, 8));
  auto part = partition_rcb(*g, inst.m, seed);
  inst.topology = std::make_shared<Topology>(derive_topology(*g, part));
  inst.mu = uniform_int(rng, 5, 50);
  inst.objects = std::make_shared<ObjectStore>(generate_quantized_objects(*g, part, inst.mu, rng()));
  for (std::size_t i = 0; i < queries; ++i)
    inst.queries.push_back({static_cast<VertexId>(rng() % n), static_cast<std::uint32_t>(uniform_int(rng, 1, 10))});
  inst.graph = std::move(g);
  return inst;
}

// ---- metrics CSV ----

inline constexpr const char* kCsvHeader =
    "qid,k,v_q,results,messages_sent,tokens_created,subgraphs_visited,wall_time_us,"
    "mode,eps_broadcasts,dijkstra_runs,settled,insufficient";

inline std::string format_neighbors(const std::vector<Neighbor>& ns) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < ns.size(); ++i) os << (i ? ";" : "") << ns[i].object << ':' << ns[i].distance;
  return os.str();
}

inline void write_csv_header(std::ostream& out) {
  out << "# dknn-metrics v1\n" << kCsvHeader << '\n';
}

inline void write_csv_row(std::ostream& out, const QueryResult& r, const std::string& mode) {
  const auto& m = r.metrics;
  out << r.qid << ',' << r.k << ',' << r.v_q + 1 << ',' << format_neighbors(r.neighbors) << ',' << m.messages_sent
      << ',' << m.tokens_created << ',' << m.subgraphs_visited << ',' << static_cast<std::uint64_t>(m.latency_us)
      << ',' << mode << ',' << m.eps_broadcasts << ',' << m.dijkstra_runs << ',' << m.settled << ','
      << (r.insufficient ? 1 : 0) << '\n';
}

struct Summary {
  double mean_latency_us = 0;
  double median_latency_us = 0;
  std::uint64_t total_messages = 0;
  std::size_t queries = 0;
};

inline Summary summarize(const std::vector<QueryResult>& rs) {
  Summary s;
  s.queries = rs.size();
  if (rs.empty()) return s;
  std::vector<double> lat;
  for (const auto& r : rs) {
    lat.push_back(r.metrics.latency_us);
    s.total_messages += r.metrics.messages_sent;
  }
  s.mean_latency_us = std::accumulate(lat.begin(), lat.end(), 0.0) / double(lat.size());
  std::sort(lat.begin(), lat.end());
  const auto n = lat.size();
  s.median_latency_us = n % 2 ? lat[n / 2] : 0.5 * (lat[n / 2 - 1] + lat[n / 2]);
  return s;
}

inline void write_csv_summary(std::ostream& out, const Summary& s, const std::string& mode) {
  out << "summary,mode=" << mode << ",queries=" << s.queries << ",mean_latency_us=" << s.mean_latency_us
      << ",median_latency_us=" << s.median_latency_us << ",total_messages=" << s.total_messages << '\n';
}

// ---- key=value config ----

inline RuntimeConfig parse_config(std::istream& in, RuntimeConfig base = {}, const std::string& name = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string joined(line);
    const auto eq = joined.find('=');
    if (eq == std::string::npos) throw ParseError(name, lineno, "expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(joined.substr(0, eq));
    const std::string value = trim(joined.substr(eq + 1));
    try {
      if (key == "tau") base.tau = static_cast<unsigned>(std::stoul(value));
      else if (key == "mode") base.mode = parse_mode(value);
      else if (key == "seed") base.seed = std::stoull(value);
      else if (key == "scheduler") {
        if (value == "deterministic") base.scheduler = SchedulerKind::Deterministic;
        else if (value == "concurrent") base.scheduler = SchedulerKind::Concurrent;
        else throw ParseError(name, lineno, "unknown scheduler `" + value + "`");
      } else if (key == "fifo") base.fifo_per_pair = (value == "1" || value == "true");
      else if (key == "trace") base.trace_path = value;
      else throw ParseError(name, lineno, "unknown key `" + key + "`");
    } catch (const std::logic_error&) {
      throw ParseError(name, lineno, "bad value for `" + key + "`");
    }
  }
  return base;
}

// Queries file: `v_q k` per line, v_q 1-based.
inline std::vector<QuerySpec> read_queries(const std::filesystem::path& file) {
  auto in = detail::open_input(file);
  std::vector<QuerySpec> qs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0].starts_with("#")) continue;
    std::int64_t v = 0;
    std::uint32_t k = 0;
    if (tok.size() != 2 || !detail::parse_number(tok[0], v) || !detail::parse_number(tok[1], k) || v < 1)
      throw ParseError(file.string(), lineno, "expected `<v_q> <k>`");
    qs.push_back({static_cast<VertexId>(v - 1), k});
  }
  return qs;
}

inline void write_queries(const std::vector<QuerySpec>& qs, std::ostream& out) {
  for (const auto& q : qs) out << q.v_q + 1 << ' ' << q.k << '\n';
}

}  // namespace dknn
