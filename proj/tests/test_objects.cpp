#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fixtures.hpp"

using namespace dknn;

namespace {

// Every object sits in exactly one per-subgraph bucket that agrees with the index.
void check_store(const ObjectStore& s) {
  std::size_t seen = 0;
  for (SubgraphId sg = 0; sg < s.partition().m; ++sg) {
    for (const auto& [v, objs] : s.live_vertices(sg)) {
      EXPECT_FALSE(objs.empty());
      EXPECT_EQ(s.partition()[v], sg);
      for (const auto& o : objs) {
        ++seen;
        EXPECT_EQ(o.live_vertex, v);
        const auto& loc = s.index().at(o.id);
        EXPECT_EQ(loc.sg, sg);
        EXPECT_EQ(loc.live_vertex, v);
      }
    }
  }
  EXPECT_EQ(seen, s.size());
}

}  // namespace

TEST(Objects, Desk6Placement) {
  auto d = dknn::testing::desk6();
  const auto& s = *d.objects;
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.index().at(1).sg, 1u);
  EXPECT_EQ(s.index().at(2).sg, 0u);
  EXPECT_EQ(s.get(2).remaining, 0.5);
  EXPECT_EQ(object_distance(2, s.get(2)), 2.5);
  check_store(s);
}

TEST(Objects, InsertValidation) {
  auto d = dknn::testing::desk6();
  ObjectStore s(d.partition);
  EXPECT_THROW(s.insert({1, 6, 0}), ValidationError);
  EXPECT_THROW(s.insert({1, 0, -1}), ValidationError);
  s.insert({1, 0, 0});
  EXPECT_THROW(s.insert({1, 2, 0}), ValidationError);
  EXPECT_THROW(s.move(9, 0, 0), ValidationError);
  EXPECT_THROW(s.get(9), ValidationError);
}

TEST(Objects, RandomMovesKeepIndexConsistent) {
  auto g = make_grid(15, 15, 2);
  auto p = partition_rcb(g, 6);
  auto s = generate_quantized_objects(g, p, 300, 5);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const ObjectId id = rng() % 300;
    const auto v = static_cast<VertexId>(rng() % g.vertex_count());
    s.move(id, v, 0.25);
    EXPECT_EQ(s.get(id).live_vertex, v);
  }
  EXPECT_EQ(s.size(), 300u);
  check_store(s);
}

TEST(Objects, GeneratorRespectsMedianBound) {
  auto g = make_grid(10, 10, 4);
  auto p = partition_rcb(g, 4);
  auto s = generate_objects(g, p, 500, 1);
  const auto hi = median_edge_weight(g);
  for (const auto& o : s.all()) {
    EXPECT_GE(o.remaining, 0);
    EXPECT_LE(o.remaining, hi);
  }
  EXPECT_THROW(generate_objects(g, p, 0, 1), ValidationError);
}

TEST(Objects, FileRoundTripAndBatches) {
  auto d = dknn::testing::desk6();
  auto s = load_objects(std::filesystem::path(DKNN_TEST_DATA) / "desk6.objects", d.partition);
  EXPECT_EQ(s.get(1).live_vertex, 4u);
  EXPECT_EQ(s.get(2).remaining, 0.5);

  auto objs = s.all();
  std::ostringstream os;
  write_objects(objs, os);
  os << "#\n" << "1 1 0.125\n";
  auto path = std::filesystem::temp_directory_path() / "dknn_objs.txt";
  std::ofstream(path) << os.str();
  auto batches = read_object_batches(path);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[0].size(), 2u);
  EXPECT_EQ(batches[1][0].live_vertex, 0u);

  std::ofstream(path) << "1 0 0.5\n";
  EXPECT_THROW(read_object_batches(path), ParseError);
}
