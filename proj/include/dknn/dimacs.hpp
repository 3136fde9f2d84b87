#pragma once

// DIMACS 9th challenge `.gr` / `.co` files and the weight-update stream.
// All vertex ids in files are 1-based; in memory they are 0-based.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dknn/road_graph.hpp"

namespace dknn {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && p == tok.data() + tok.size();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline GraphSnapshot load_dimacs(const std::filesystem::path& graph_file,
                                 const std::filesystem::path& coord_file) {
  using detail::parse_number;
  const std::string gname = graph_file.string();
  const std::string cname = coord_file.string();

  std::vector<EdgeSpec> arcs;
  std::size_t declared_vertices = 0;
  VertexId max_id = 0;
  {
    auto in = detail::open_input(graph_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = detail::split_ws(line);
      if (tok.empty() || tok[0] == "c") continue;
      if (tok[0] == "p") {
        std::size_t n = 0, m = 0;
        if (tok.size() != 4 || !parse_number(tok[2], n) || !parse_number(tok[3], m))
          throw ParseError(gname, lineno, "expected `p sp <n> <m>`");
        declared_vertices = n;
        arcs.reserve(m);
      } else if (tok[0] == "a") {
        std::int64_t u = 0, v = 0;
        double w = 0;
        if (tok.size() != 4 || !parse_number(tok[1], u) || !parse_number(tok[2], v) ||
            !parse_number(tok[3], w) || u < 1 || v < 1)
          throw ParseError(gname, lineno, "expected `a <u> <v> <w>` with 1-based ids");
        if (w < 0) throw ValidationError(gname + ":" + std::to_string(lineno) + ": negative weight");
        if (u == v) continue;  // self-loop arcs carry no routing information
        arcs.push_back({static_cast<VertexId>(u - 1), static_cast<VertexId>(v - 1), w});
        max_id = std::max({max_id, static_cast<VertexId>(u), static_cast<VertexId>(v)});
      } else {
        throw ParseError(gname, lineno, "unknown record `" + std::string(tok[0]) + "`");
      }
    }
  }

  std::vector<Point> coords;
  std::vector<bool> seen;
  {
    auto in = detail::open_input(coord_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = detail::split_ws(line);
      if (tok.empty() || tok[0] == "c" || tok[0] == "p") continue;
      if (tok[0] != "v") throw ParseError(cname, lineno, "unknown record `" + std::string(tok[0]) + "`");
      std::int64_t id = 0;
      double x = 0, y = 0;
      if (tok.size() != 4 || !parse_number(tok[1], id) || !parse_number(tok[2], x) ||
          !parse_number(tok[3], y) || id < 1)
        throw ParseError(cname, lineno, "expected `v <id> <x> <y>` with 1-based id");
      const auto idx = static_cast<std::size_t>(id - 1);
      if (idx >= coords.size()) {
        coords.resize(idx + 1);
        seen.resize(idx + 1, false);
      }
      coords[idx] = {x, y};
      seen[idx] = true;
    }
  }

  const std::size_t n = std::max<std::size_t>({declared_vertices, max_id, coords.size()});
  if (coords.size() < n) seen.resize(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    if (!seen[v])
      throw ValidationError("vertex " + std::to_string(v + 1) + " has no coordinate in " + cname);
  }
  coords.resize(n);
  return GraphSnapshot::build(std::move(coords), arcs);
}

// Writes both arc directions so the output is a well-formed DIMACS file.
inline void write_dimacs(const GraphSnapshot& g, std::ostream& gr, std::ostream& co) {
  gr.precision(17);
  co.precision(17);
  gr << "p sp " << g.vertex_count() << ' ' << 2 * g.edge_count() << '\n';
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.endpoints(e);
    gr << "a " << a + 1 << ' ' << b + 1 << ' ' << g.weight(e) << '\n';
    gr << "a " << b + 1 << ' ' << a + 1 << ' ' << g.weight(e) << '\n';
  }
  co << "p aux sp co " << g.vertex_count() << '\n';
  for (VertexId v = 0; v < g.vertex_count(); ++v)
    co << "v " << v + 1 << ' ' << g.coord(v).x << ' ' << g.coord(v).y << '\n';
}

// Update stream: `u v new_weight` per line, batches separated by `# snapshot`.
inline std::vector<std::vector<WeightUpdate>> read_update_stream(const std::filesystem::path& file) {
  using detail::parse_number;
  auto in = detail::open_input(file);
  std::vector<std::vector<WeightUpdate>> batches(1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0].starts_with("#")) {
      if (line.find("snapshot") != std::string::npos) batches.emplace_back();
      continue;
    }
    std::int64_t u = 0, v = 0;
    double w = 0;
    if (tok.size() != 3 || !parse_number(tok[0], u) || !parse_number(tok[1], v) ||
        !parse_number(tok[2], w) || u < 1 || v < 1)
      throw ParseError(file.string(), lineno, "expected `<u> <v> <new_weight>`");
    batches.back().push_back({static_cast<VertexId>(u - 1), static_cast<VertexId>(v - 1), w});
  }
  if (batches.size() > 1 && batches.front().empty()) batches.erase(batches.begin());
  return batches;
}

inline void write_update_stream(const std::vector<std::vector<WeightUpdate>>& batches,
                                std::ostream& out) {
  out.precision(17);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (b > 0) out << "# snapshot\n";
    for (const auto& u : batches[b]) out << u.u + 1 << ' ' << u.v + 1 << ' ' << u.new_weight << '\n';
  }
}

}  // namespace dknn
