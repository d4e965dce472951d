#include <gtest/gtest.h>

#include <cstring>

#include "test_util.hpp"

using namespace hforest;

namespace {

GraphParams exhaustive(std::size_t count, std::uint32_t k_out = 15) {
  GraphParams p;
  p.n = 1;
  p.k1 = static_cast<std::uint32_t>(count);
  p.k2 = static_cast<std::uint32_t>(count);
  p.k_out = k_out;
  p.exact_final = true;
  return p;
}

// Independent O(N^2) oracle: full sort of every row by (distance, id).
KnnGraph naive_graph(const VectorDataset& ds, std::uint32_t k_out) {
  KnnGraph g(ds.size(), k_out);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::pair<float, id_t>> all;
    for (std::size_t j = 0; j < ds.size(); ++j)
      if (j != i) all.push_back({squared_l2(ds.row(i), ds.row(j)), static_cast<id_t>(j)});
    std::sort(all.begin(), all.end());
    for (std::uint32_t r = 0; r < k_out; ++r) g.row(i)[r] = all[r].second;
  }
  return g;
}

}  // namespace

TEST(BuildGraph, ExhaustiveEqualsBruteForce) {
  for (std::uint64_t seed = 0; seed < 9; ++seed) {
    const std::uint32_t dim = std::array<std::uint32_t, 3>{2, 16, 64}[seed % 3];
    const std::size_t count = 40 + seed * 53;
    const auto ds = hft::random_dataset(count, dim, seed, seed % 2 ? 3 : 0);
    auto p = exhaustive(count, 1 + static_cast<std::uint32_t>(seed % 20));
    p.seed = seed;
    p.n = 1 + static_cast<std::uint32_t>(seed % 3);
    const auto g = build_graph(ds, p);
    ASSERT_EQ(g, naive_graph(ds, p.k_out)) << "seed " << seed;
    ASSERT_EQ(g, brute_force_graph(ds, p.k_out));
  }
}

TEST(BuildGraph, DuplicatePairsFirst) {
  auto base = hft::random_dataset(60, 5, 1);
  std::vector<float> v(base.data().begin(), base.data().end());
  v.insert(v.end(), base.data().begin(), base.data().end());  // row i and row i+60 coincide
  const VectorDataset ds(5, v);
  auto p = exhaustive(ds.size(), 4);
  const auto g = build_graph(ds, p);
  for (std::size_t i = 0; i < 60; ++i) {
    EXPECT_EQ(g.row(i)[0], i + 60);
    EXPECT_EQ(g.row(i + 60)[0], i);
  }
}

TEST(BuildGraph, ApproximateModeInvariants) {
  const auto ds = hft::random_dataset(3000, 12, 2);
  GraphParams p;
  p.n = 6;
  p.k1 = 40;
  p.k2 = 25;
  p.k_out = 10;
  p.seed = 4;
  GraphStats st;
  const auto g = build_graph(ds, p, &st);
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.size(), 3000u);
  EXPECT_LE(st.max_c1_per_node, 6u * 40);
  EXPECT_EQ(st.c1_slots, 3000u * 6 * 40);
  EXPECT_LE(st.distance_evals, 3000u * 25);
  p.exact_final = false;
  const auto ga = build_graph(ds, p);
  EXPECT_NO_THROW(ga.validate());
  EXPECT_GT(graph_recall(ga, brute_force_graph(ds, 10)), 0.2);
}

TEST(BuildGraph, ParameterErrors) {
  const auto ds = hft::random_dataset(15, 3, 3);
  EXPECT_THROW(build_graph(ds, exhaustive(15, 15)), Error);  // count <= k_out
  GraphParams p = exhaustive(15, 4);
  p.k1 = 1;
  EXPECT_THROW(build_graph(ds, p), Error);
  p = exhaustive(15, 4);
  p.k2 = 3;
  EXPECT_THROW(build_graph(ds, p), Error);
  p = exhaustive(15, 4);
  p.n = 0;
  EXPECT_THROW(build_graph(ds, p), Error);
}

TEST(BuildGraph, DeterministicAcrossThreads) {
  const auto ds = hft::random_dataset(4000, 20, 5);
  GraphParams p;
  p.n = 4;
  p.k1 = 30;
  p.k2 = 20;
  p.k_out = 8;
  p.seed = 11;
  std::string b1, b8;
  {
    hft::ThreadScope t(1);
    b1 = hft::bytes_of(build_graph(ds, p));
  }
  {
    hft::ThreadScope t(8);
    b8 = hft::bytes_of(build_graph(ds, p));
  }
  EXPECT_EQ(b1, b8);
  EXPECT_EQ(hft::bytes_of(build_graph(ds, p)), b1);
  p.seed = 12;
  EXPECT_NE(hft::bytes_of(build_graph(ds, p)), b1);
}

TEST(PeakMemory, IndependentOfSorts) {
  GraphParams a, b;
  a.n = 1;
  b.n = 720;
  EXPECT_EQ(peak_transient_memory(a, 100000, 64), peak_transient_memory(b, 100000, 64));
  EXPECT_EQ(peak_transient_memory(a, 0, 64), 0u);
  EXPECT_EQ(peak_transient_memory(a, 10, 64), 10u * (8 * 8 + 4));
}

TEST(PeakMemory, MeasuredWithinBound) {
  const auto ds = hft::random_dataset(10000, 24, 6);
  for (std::uint32_t n : {1u, 4u, 9u}) {
    GraphParams p;
    p.n = n;
    p.k1 = 20;
    p.k2 = 15;
    p.k_out = 10;
    GraphStats st;
    build_graph(ds, p, &st);
    const double bound = static_cast<double>(peak_transient_memory(p, ds.size(), ds.dim()));
    EXPECT_GE(st.scratch_peak_bytes, bound * 0.8);
    EXPECT_LE(st.scratch_peak_bytes, bound * 1.25);
  }
}

TEST(GraphRecall, Examples) {
  KnnGraph t(2, 2);
  t.ids = {1, 0, 0, 1};
  EXPECT_EQ(graph_recall(t, t), 1.0);
  KnnGraph truth(3, 2);
  truth.ids = {1, 2, 0, 2, 0, 1};
  KnnGraph g(3, 2);
  g.ids = {2, 1, 2, 0, 1, 0};
  EXPECT_EQ(graph_recall(g, truth), 1.0);  // order within a row does not matter

  KnnGraph a(4, 2), b(4, 2);
  a.ids = {1, 2, 0, 2, 0, 1, 0, 1};
  b.ids = {3, 3, 3, 3, 3, 3, 2, 2};
  EXPECT_EQ(graph_recall(a, b), 0.0);

  // count=2, k_out=2 is impossible without self-loops; recall only compares rows.
  KnnGraph x, y;
  x.k_out = y.k_out = 2;
  x.ids = {1, 2, 0, 2};
  y.ids = {1, 3, 0, 2};
  EXPECT_EQ(graph_recall(x, y), 0.75);
  EXPECT_THROW(graph_recall(x, a), Error);
}

TEST(GraphRecall, SampledMatchesFull) {
  const auto ds = hft::random_dataset(800, 6, 7);
  GraphParams p;
  p.n = 3;
  p.k1 = 20;
  p.k2 = 15;
  p.k_out = 5;
  const auto g = build_graph(ds, p);
  const auto truth = brute_force_graph(ds, 5);
  std::vector<id_t> all(800);
  std::iota(all.begin(), all.end(), id_t{0});
  const auto rows = brute_force_graph_rows(ds, all, 5);
  EXPECT_DOUBLE_EQ(graph_recall_sampled(g, all, rows), graph_recall(g, truth));
}

TEST(GraphIo, RoundTripAndValidation) {
  const auto ds = hft::random_dataset(500, 4, 8);
  const auto g = brute_force_graph(ds, 7);
  const auto dir = hft::temp_dir("graph");
  const auto path = (dir / "g.hfg").string();
  save_graph(g, path);
  EXPECT_EQ(load_graph(path), g);

  KnnGraph loop(3, 1);
  loop.ids = {1, 1, 0};
  EXPECT_THROW(loop.validate(), Error);
  std::string bytes = hft::bytes_of(g);
  std::memcpy(bytes.data() + 16, "\0\0\0\0", 4);  // node 0 now links to itself
  std::istringstream in(bytes);
  EXPECT_THROW(read_graph(in), Error);
  std::filesystem::remove_all(dir);
}
