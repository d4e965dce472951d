#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace hforest;

namespace {

// Classic 2-D Hilbert index (Wikipedia "xy2d"), written independently.
std::uint64_t reference_xy2d(std::uint32_t n, std::uint32_t x, std::uint32_t y) {
  std::uint64_t d = 0;
  for (std::uint32_t s = n / 2; s > 0; s /= 2) {
    const std::uint32_t rx = (x & s) > 0;
    const std::uint32_t ry = (y & s) > 0;
    d += std::uint64_t{s} * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = n - 1 - x;
        y = n - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

GridPoint cell_of(std::uint64_t idx, std::uint32_t d, std::uint32_t m) {
  GridPoint g;
  g.coords.resize(d);
  for (std::uint32_t j = 0; j < d; ++j) g.coords[j] = static_cast<std::uint32_t>((idx >> (j * m)) & ((1u << m) - 1));
  return g;
}

std::uint64_t l1(const GridPoint& a, const GridPoint& b) {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < a.coords.size(); ++j)
    s += a.coords[j] > b.coords[j] ? a.coords[j] - b.coords[j] : b.coords[j] - a.coords[j];
  return s;
}

Bounds unit_bounds(std::uint32_t d, float lo = -1.0f, float hi = 1.0f) {
  Bounds b;
  b.lo.assign(d, lo);
  b.hi.assign(d, hi);
  return b;
}

}  // namespace

TEST(HilbertEncode, ExhaustiveBijectionAndAdjacency) {
  for (std::uint32_t d = 1; d <= 4; ++d)
    for (std::uint32_t m = 1; m <= 4; ++m) {
      const auto cfg = CurveConfig::identity(d, m);
      const std::uint64_t cells = std::uint64_t{1} << (d * m);
      std::vector<GridPoint> by_key(cells);
      std::vector<bool> seen(cells, false);
      for (std::uint64_t c = 0; c < cells; ++c) {
        const auto g = cell_of(c, d, m);
        const auto key = hilbert_encode(g, cfg).to_u64();
        ASSERT_LT(key, cells);
        ASSERT_FALSE(seen[key]) << "d=" << d << " m=" << m;
        seen[key] = true;
        by_key[key] = g;
      }
      for (std::uint64_t k = 1; k < cells; ++k) ASSERT_EQ(l1(by_key[k - 1], by_key[k]), 1u) << "d=" << d << " m=" << m;
    }
}

TEST(HilbertEncode, OriginIsZero) {
  for (std::uint32_t d : {1u, 2u, 7u, 64u, 200u}) {
    const auto cfg = CurveConfig::identity(d, 8);
    GridPoint g;
    g.coords.assign(d, 0);
    const auto k = hilbert_encode(g, cfg);
    for (auto w : k.words) EXPECT_EQ(w, 0u);
  }
}

TEST(HilbertEncode, MatchesReference2D) {
  for (std::uint32_t m = 1; m <= 5; ++m) {
    const auto cfg = CurveConfig::identity(2, m);
    const std::uint32_t n = 1u << m;
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = 0; b < n; ++b)
        ASSERT_EQ(hilbert_encode(GridPoint{{a, b}}, cfg).to_u64(), reference_xy2d(n, a, b)) << a << "," << b;
  }
}

TEST(HilbertEncode, TwoByTwoKeys) {
  const auto cfg = CurveConfig::identity(2, 1);
  std::set<std::uint64_t> keys;
  for (std::uint32_t a = 0; a < 2; ++a)
    for (std::uint32_t b = 0; b < 2; ++b) keys.insert(hilbert_encode(GridPoint{{a, b}}, cfg).to_u64());
  EXPECT_EQ(keys, (std::set<std::uint64_t>{0, 1, 2, 3}));
}

TEST(HilbertEncode, RejectsOversizedCoordinate) {
  const auto cfg = CurveConfig::identity(2, 3);
  EXPECT_THROW(hilbert_encode(GridPoint{{8, 0}}, cfg), Error);
  EXPECT_THROW(hilbert_encode(GridPoint{{1}}, cfg), Error);
}

TEST(HilbertDecode, KeyZeroIsOrigin) {
  const auto cfg = CurveConfig::identity(5, 6);
  const auto g = hilbert_decode(HilbertKey::from_u64(0, cfg), cfg);
  EXPECT_EQ(g.coords, std::vector<std::uint32_t>(5, 0));
}

TEST(HilbertDecode, ExhaustiveRoundTrip2D) {
  const auto cfg = CurveConfig::identity(2, 4);
  for (std::uint64_t k = 0; k < 256; ++k) {
    const auto key = HilbertKey::from_u64(k, cfg);
    EXPECT_EQ(hilbert_encode(hilbert_decode(key, cfg), cfg), key);
  }
}

TEST(HilbertDecode, RandomKeysRoundTrip) {
  const auto cfg = CurveConfig::identity(8, 8);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto key = HilbertKey::from_u64(rng(), cfg);
    EXPECT_EQ(hilbert_encode(hilbert_decode(key, cfg), cfg), key);
  }
}

TEST(HilbertDecode, MultiWordRoundTrip) {
  std::mt19937_64 rng(4);
  for (std::uint32_t d : {9u, 64u, 100u}) {
    for (std::uint32_t m : {3u, 8u, 13u}) {
      const auto cfg = CurveConfig::identity(d, m);
      for (int i = 0; i < 50; ++i) {
        GridPoint g;
        for (std::uint32_t j = 0; j < d; ++j) g.coords.push_back(static_cast<std::uint32_t>(rng()) & cfg.max_cell());
        const auto k = hilbert_encode(g, cfg);
        ASSERT_EQ(k.words.size(), cfg.key_words());
        EXPECT_EQ(hilbert_decode(k, cfg), g);
      }
    }
  }
}

TEST(HilbertDecode, OutOfRangeKey) {
  const auto cfg = CurveConfig::identity(3, 2);  // 6-bit keys
  EXPECT_THROW(hilbert_decode(HilbertKey::from_u64(64, cfg), cfg), Error);
  EXPECT_NO_THROW(hilbert_decode(HilbertKey::from_u64(63, cfg), cfg));
}

TEST(ToGrid, Boundaries) {
  const auto b = unit_bounds(3);
  const auto cfg = CurveConfig::identity(3, 5);
  const std::vector<float> lo = {-1, -1, -1}, hi = {1, 1, 1}, outside = {-9, 9, 0};
  EXPECT_EQ(to_grid(lo, b, cfg).coords, std::vector<std::uint32_t>(3, 0));
  EXPECT_EQ(to_grid(hi, b, cfg).coords, std::vector<std::uint32_t>(3, 31));
  EXPECT_EQ(to_grid(outside, b, cfg).coords, (std::vector<std::uint32_t>{0, 31, 16}));
}

TEST(ToGrid, RoundHalfUp) {
  const auto b = unit_bounds(2, 0.0f, 3.0f);
  const auto cfg = CurveConfig::identity(2, 2);
  const std::vector<float> v = {1.6f, 0.5f};
  EXPECT_EQ(to_grid(v, b, cfg).coords, (std::vector<std::uint32_t>{2, 1}));
  const std::vector<float> w = {1.4f, 2.5f};
  EXPECT_EQ(to_grid(w, b, cfg).coords, (std::vector<std::uint32_t>{1, 3}));
}

TEST(ToGrid, DegenerateDimensionMapsToZero) {
  Bounds b;
  b.lo = {2.0f, 0.0f};
  b.hi = {2.0f, 1.0f};
  const auto cfg = CurveConfig::identity(2, 4);
  const std::vector<float> v = {2.0f, 1.0f};
  EXPECT_EQ(to_grid(v, b, cfg).coords, (std::vector<std::uint32_t>{0, 15}));
}

TEST(ToGrid, AxisPermutationReorders) {
  const auto b = unit_bounds(3, 0.0f, 7.0f);
  auto cfg = CurveConfig::identity(3, 3);
  cfg.axis_perm = {2, 0, 1};
  const std::vector<float> v = {1, 2, 3};
  EXPECT_EQ(to_grid(v, b, cfg).coords, (std::vector<std::uint32_t>{3, 1, 2}));
  const std::vector<float> short_v = {1, 2};
  EXPECT_THROW(to_grid(short_v, b, cfg), Error);
}

TEST(CurveConfig, Validation) {
  auto cfg = CurveConfig::identity(3, 4);
  cfg.axis_perm = {0, 0, 1};
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(CurveConfig::identity(600, 8), Error);  // 4800 key bits
  EXPECT_NO_THROW(CurveConfig::identity(512, 8));
  EXPECT_THROW(CurveConfig::identity(2, 0), Error);
  EXPECT_THROW(CurveConfig::identity(0, 8), Error);
}

TEST(CurveConfig, DerivedIsDeterministicPermutation) {
  const auto a = CurveConfig::derived(64, 8, 42, 3);
  const auto b = CurveConfig::derived(64, 8, 42, 3);
  const auto c = CurveConfig::derived(64, 8, 42, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.axis_perm, c.axis_perm);
  EXPECT_TRUE(is_permutation_of_range(a.axis_perm));
}

TEST(HilbertCompare, Laws) {
  const auto ds = hft::random_dataset(300, 6, 8);
  const auto b = Bounds::of(ds);
  const auto cfg = CurveConfig::derived(6, 8, 1, 0);
  KeyEncoder enc(b, cfg);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10000; ++i) {
    const auto x = ds.row(rng() % ds.size()), y = ds.row(rng() % ds.size()), z = ds.row(rng() % ds.size());
    const auto xy = hilbert_compare(x, y, b, cfg);
    EXPECT_EQ(xy, enc.encode(x) <=> enc.encode(y));
    EXPECT_EQ(hilbert_compare(x, x, b, cfg), std::strong_ordering::equal);
    EXPECT_EQ(hilbert_compare(y, x, b, cfg), 0 <=> xy);
    if (xy < 0 && hilbert_compare(y, z, b, cfg) < 0) {
      EXPECT_TRUE(hilbert_compare(x, z, b, cfg) < 0);
    }
  }
}

TEST(HilbertSort, EdgeCases) {
  const auto cfg = CurveConfig::identity(3, 8);
  EXPECT_EQ(hilbert_sort(VectorDataset(3), cfg).size(), 0u);
  const auto one = hft::random_dataset(1, 3, 1);
  const auto o = hilbert_sort(one, cfg);
  EXPECT_EQ(o.perm, std::vector<id_t>{0});
  EXPECT_EQ(o.inverse, std::vector<id_t>{0});
}

TEST(HilbertSort, MatchesKeySortOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::uint32_t d = 1 + static_cast<std::uint32_t>(seed % 9);
    const auto ds = hft::random_dataset(200 + seed * 10, d, seed, seed % 2 ? 5 : 0);
    const auto cfg = CurveConfig::derived(d, 1 + static_cast<std::uint32_t>(seed % 8), seed, 0);
    const auto b = Bounds::of(ds);
    const auto order = hilbert_sort(ds, b, cfg);
    std::vector<std::pair<HilbertKey, id_t>> oracle;
    for (std::size_t i = 0; i < ds.size(); ++i)
      oracle.push_back({hilbert_encode(to_grid(ds.row(i), b, cfg), cfg), static_cast<id_t>(i)});
    std::sort(oracle.begin(), oracle.end());
    ASSERT_EQ(order.size(), ds.size());
    for (std::size_t p = 0; p < ds.size(); ++p) {
      EXPECT_EQ(order.perm[p], oracle[p].second);
      EXPECT_EQ(order.inverse[order.perm[p]], p);
    }
  }
}

TEST(HilbertSort, GridCurveVisitsInOrder) {
  // 16 points on a 4x4 grid: sorted order walks the curve one step at a time.
  std::vector<float> v;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      v.push_back(static_cast<float>(a));
      v.push_back(static_cast<float>(b));
    }
  const VectorDataset ds(2, v);
  const auto cfg = CurveConfig::identity(2, 2);
  const auto order = hilbert_sort(ds, cfg);
  for (std::size_t p = 1; p < 16; ++p) {
    const auto x = ds.row(order.perm[p - 1]), y = ds.row(order.perm[p]);
    EXPECT_EQ(std::abs(x[0] - y[0]) + std::abs(x[1] - y[1]), 1.0f);
  }
}

TEST(HilbertSort, DuplicatesOrderedById) {
  const VectorDataset ds(2, {0.5f, 0.5f, 0.0f, 0.0f, 0.5f, 0.5f, 1.0f, 1.0f, 0.5f, 0.5f});
  const auto o = hilbert_sort(ds, CurveConfig::identity(2, 4));
  std::vector<id_t> dup;
  for (auto id : o.perm)
    if (id % 2 == 0) dup.push_back(id);
  EXPECT_EQ(dup, (std::vector<id_t>{0, 2, 4}));
}

TEST(HilbertSort, AxisPermutationChangesOrder) {
  const auto ds = hft::random_dataset(500, 8, 21);
  const auto b = Bounds::of(ds);
  const auto a = hilbert_sort(ds, b, CurveConfig::derived(8, 8, 5, 0));
  const auto c = hilbert_sort(ds, b, CurveConfig::derived(8, 8, 5, 1));
  EXPECT_NE(a.perm, c.perm);
  EXPECT_TRUE(is_permutation_of_range(a.perm));
  EXPECT_TRUE(is_permutation_of_range(c.perm));
}

TEST(PositionSearch, MatchesLinearScan) {
  const auto ds = hft::random_dataset(500, 5, 13, 7);
  const auto qs = hft::random_dataset(1000, 5, 14);
  const auto b = Bounds::of(ds);
  const auto cfg = CurveConfig::derived(5, 6, 2, 0);
  const auto order = hilbert_sort(ds, b, cfg);
  KeyEncoder enc(b, cfg);
  for (std::size_t q = 0; q < qs.size(); ++q) {
    const auto qk = enc.encode(qs.row(q));
    std::size_t before = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) before += enc.encode(ds.row(i)) < qk;
    EXPECT_EQ(position_search(order, ds, qs.row(q), b, cfg), before);
  }
}

TEST(PositionSearch, BelowAllAndFirstOfEquals) {
  const auto ds = hft::random_dataset(50, 3, 15);
  const auto b = Bounds::of(ds);
  const auto cfg = CurveConfig::identity(3, 8);
  const auto order = hilbert_sort(ds, b, cfg);
  const std::vector<float> low = {-1e6f, -1e6f, -1e6f};
  EXPECT_EQ(position_search(order, ds, low, b, cfg), 0u);
  const std::vector<float> high = {1e6f, 1e6f, 1e6f};
  const auto hk = hilbert_encode(to_grid(high, b, cfg), cfg);
  std::size_t expect_high = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) expect_high += hilbert_encode(to_grid(ds.row(i), b, cfg), cfg) < hk;
  EXPECT_EQ(position_search(order, ds, high, b, cfg), expect_high);
  for (std::size_t p = 0; p < ds.size(); ++p) {
    const auto got = position_search(order, ds, ds.row(order.perm[p]), b, cfg);
    EXPECT_LE(got, p);
    EXPECT_EQ(hilbert_compare(ds.row(order.perm[got]), ds.row(order.perm[p]), b, cfg), std::strong_ordering::equal);
  }
}
