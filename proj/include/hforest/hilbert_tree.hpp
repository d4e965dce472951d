#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "hforest/common.hpp"
#include "hforest/dataset.hpp"
#include "hforest/hilbert.hpp"

namespace hforest {

inline constexpr std::uint32_t kDefaultLeafSize = 100;

// Leaf-compressed Hilbert tree. The balanced BST over the ordered sequence is
// implicit: its separators are the first keys of consecutive leaves, so a
// descent is a binary search over leaf_keys followed by an in-leaf search.
struct HilbertTree {
  CurveConfig cfg;
  std::uint32_t leaf_size = kDefaultLeafSize;
  HilbertOrder order;
  std::vector<std::uint32_t> leaf_begin;  // leaf_count()+1 offsets into order.perm
  std::vector<std::uint64_t> leaf_keys;   // key of each leaf's first element

  std::size_t size() const { return order.size(); }
  std::size_t leaf_count() const { return leaf_begin.empty() ? 0 : leaf_begin.size() - 1; }
  std::span<const id_t> leaf(std::size_t l) const {
    return std::span<const id_t>(order.perm).subspan(leaf_begin[l], leaf_begin[l + 1] - leaf_begin[l]);
  }

  bool operator==(const HilbertTree&) const = default;
};

namespace detail {
inline void split_leaves(std::uint32_t lo, std::uint32_t hi, std::uint32_t leaf_size,
                         std::vector<std::uint32_t>& begins) {
  if (hi - lo <= leaf_size) {
    begins.push_back(lo);
    return;
  }
  const std::uint32_t mid = lo + (hi - lo) / 2;
  split_leaves(lo, mid, leaf_size, begins);
  split_leaves(mid, hi, leaf_size, begins);
}
}  // namespace detail

inline HilbertTree build_tree(const VectorDataset& ds, const Bounds& bounds, const CurveConfig& cfg,
                              std::uint32_t leaf_size = kDefaultLeafSize) {
  if (leaf_size == 0) throw Error("leaf_size must be >= 1");
  cfg.validate();
  HilbertTree t;
  t.cfg = cfg;
  t.leaf_size = leaf_size;
  if (ds.empty()) return t;
  if (ds.dim() != cfg.dim) throw Error("build_tree: dimension mismatch");
  if (ds.size() > UINT32_MAX) throw Error("build_tree: more than 2^32 points");

  const auto keys = encode_all(ds, bounds, cfg);
  std::vector<id_t> perm;
  sort_by_keys(keys, perm);
  t.order = HilbertOrder::from_perm(std::move(perm));

  detail::split_leaves(0, static_cast<std::uint32_t>(ds.size()), leaf_size, t.leaf_begin);
  t.leaf_begin.push_back(static_cast<std::uint32_t>(ds.size()));
  t.leaf_keys.resize(t.leaf_count() * keys.words);
  for (std::size_t l = 0; l < t.leaf_count(); ++l) {
    const auto* k = keys.key(t.order.perm[t.leaf_begin[l]]);
    std::copy(k, k + keys.words, t.leaf_keys.begin() + l * keys.words);
  }
  return t;
}

inline HilbertTree build_tree(const VectorDataset& ds, const CurveConfig& cfg,
                              std::uint32_t leaf_size = kDefaultLeafSize) {
  if (ds.empty()) return build_tree(ds, Bounds{}, cfg, leaf_size);
  return build_tree(ds, Bounds::of(ds), cfg, leaf_size);
}

// Lookup of encoded query keys against one tree.
class TreeLocator {
 public:
  TreeLocator(const HilbertTree& tree, const VectorDataset& ds, const Bounds& bounds)
      : tree_(&tree), ds_(&ds), enc_(bounds, tree.cfg), scratch_(tree.cfg.key_words()) {}

  std::size_t words() const { return scratch_.size(); }
  KeyEncoder& encoder() { return enc_; }

  // Insertion position of qkey among the tree's ordered points.
  std::size_t locate(const std::uint64_t* qkey) {
    const std::size_t w = words();
    const auto& t = *tree_;
    std::size_t lo = 0, hi = t.leaf_count();
    while (lo < hi) {  // leaves whose first key is < qkey
      const std::size_t mid = lo + (hi - lo) / 2;
      if (compare_words(t.leaf_keys.data() + mid * w, qkey, w) < 0)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo == 0) return 0;
    std::size_t a = t.leaf_begin[lo - 1], b = t.leaf_begin[lo];
    ++a;  // the leaf's first key is already known to be < qkey
    while (a < b) {
      const std::size_t mid = a + (b - a) / 2;
      enc_.encode(ds_->row(t.order.perm[mid]), scratch_.data());
      if (compare_words(scratch_.data(), qkey, w) < 0)
        a = mid + 1;
      else
        b = mid;
    }
    return a;
  }

  std::size_t locate(std::span<const float> q) {
    std::vector<std::uint64_t> key(words());
    enc_.encode(q, key.data());
    return locate(key.data());
  }

 private:
  const HilbertTree* tree_;
  const VectorDataset* ds_;
  KeyEncoder enc_;
  std::vector<std::uint64_t> scratch_;
};

// Positions of every query in the tree's order. The queries are encoded in
// one pass against this tree, then located independently.
inline std::vector<std::size_t> batch_positions(const HilbertTree& tree, const VectorDataset& ds,
                                                const Bounds& bounds, const VectorDataset& queries) {
  if (queries.empty()) return {};
  if (queries.dim() != tree.cfg.dim) throw Error("batch_positions: query dimension mismatch");
  std::vector<std::size_t> pos(queries.size());
  if (tree.size() == 0) return pos;
  const std::size_t chunk = 64;
  const std::size_t chunks = (queries.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    TreeLocator loc(tree, ds, bounds);
    std::vector<std::uint64_t> key(loc.words());
    const std::size_t end = std::min(queries.size(), (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      loc.encoder().encode(queries.row(i), key.data());
      pos[i] = loc.locate(key.data());
    }
  });
  return pos;
}

// [begin, end) of the k1 positions nearest to `position`, lower side first on ties.
inline std::pair<std::size_t, std::size_t> window_around(std::size_t count, std::size_t position,
                                                         std::size_t k1) {
  if (k1 >= count) return {0, count};
  std::size_t begin = position > k1 / 2 ? position - k1 / 2 : 0;
  begin = std::min(begin, count - k1);
  return {begin, begin + k1};
}

inline std::vector<id_t> extract_candidates(const HilbertOrder& order, std::size_t position, std::size_t k1) {
  if (k1 == 0) throw Error("k1 must be >= 1");
  const auto [b, e] = window_around(order.size(), position, k1);
  return {order.perm.begin() + static_cast<std::ptrdiff_t>(b), order.perm.begin() + static_cast<std::ptrdiff_t>(e)};
}

inline std::vector<id_t> extract_candidates(const HilbertTree& tree, std::size_t position, std::size_t k1) {
  return extract_candidates(tree.order, position, k1);
}

struct HilbertForest {
  std::uint64_t global_seed = 0;
  std::uint32_t leaf_size = kDefaultLeafSize;
  std::uint32_t bits_per_axis = kDefaultBitsPerAxis;
  Bounds bounds;
  std::vector<HilbertTree> trees;

  std::size_t size() const { return trees.size(); }
  std::size_t point_count() const { return trees.empty() ? 0 : trees.front().size(); }

  bool operator==(const HilbertForest&) const = default;
};

inline HilbertForest build_forest(const VectorDataset& ds, std::size_t n_trees,
                                  std::uint32_t leaf_size = kDefaultLeafSize, std::uint64_t global_seed = 0,
                                  std::uint32_t bits_per_axis = kDefaultBitsPerAxis) {
  if (n_trees == 0) throw Error("forest needs at least one tree");
  if (leaf_size == 0) throw Error("leaf_size must be >= 1");
  if (ds.empty()) throw Error("cannot build a forest over an empty dataset");
  HilbertForest f;
  f.global_seed = global_seed;
  f.leaf_size = leaf_size;
  f.bits_per_axis = bits_per_axis;
  f.bounds = Bounds::of(ds);
  std::vector<CurveConfig> cfgs;
  for (std::size_t t = 0; t < n_trees; ++t)
    cfgs.push_back(CurveConfig::derived(ds.dim(), bits_per_axis, global_seed, t));
  f.trees.resize(n_trees);
  parallel_for(n_trees, [&](std::size_t t) { f.trees[t] = build_tree(ds, f.bounds, cfgs[t], leaf_size); });
  return f;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_forest(BinaryWriter& w, const HilbertForest& f) {
  const std::uint32_t dim = static_cast<std::uint32_t>(f.bounds.dim());
  format::write_header(w, format::kForestMagic, dim, f.point_count());
  w.put(f.bits_per_axis);
  w.put(f.leaf_size);
  w.put(static_cast<std::uint32_t>(f.trees.size()));
  w.put(f.global_seed);
  w.put_span(std::span<const float>(f.bounds.lo));
  w.put_span(std::span<const float>(f.bounds.hi));
  for (const auto& t : f.trees) {
    w.put(t.cfg.seed);
    w.put_span(std::span<const std::uint32_t>(t.cfg.axis_perm));
    w.put(static_cast<std::uint32_t>(t.leaf_count()));
    w.put_span(std::span<const std::uint32_t>(t.leaf_begin));
    w.put_span(std::span<const std::uint64_t>(t.leaf_keys));
    w.put_span(std::span<const id_t>(t.order.perm));
  }
}

inline HilbertForest read_forest(BinaryReader& r) {
  const auto h = format::read_header(r, format::kForestMagic);
  HilbertForest f;
  f.bits_per_axis = r.get<std::uint32_t>();
  f.leaf_size = r.get<std::uint32_t>();
  const auto n_trees = r.get<std::uint32_t>();
  f.global_seed = r.get<std::uint64_t>();
  f.bounds.lo = r.get_vector<float>(h.width);
  f.bounds.hi = r.get_vector<float>(h.width);
  try {
    f.bounds.validate(h.width);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  if (f.leaf_size == 0) r.fail("leaf_size is zero");
  for (std::uint32_t i = 0; i < n_trees; ++i) {
    HilbertTree t;
    t.leaf_size = f.leaf_size;
    t.cfg.dim = h.width;
    t.cfg.bits_per_axis = f.bits_per_axis;
    t.cfg.seed = r.get<std::uint64_t>();
    t.cfg.axis_perm = r.get_vector<std::uint32_t>(h.width);
    try {
      t.cfg.validate();
    } catch (const Error& e) {
      r.fail(std::string("tree ") + std::to_string(i) + ": " + e.what());
    }
    const auto leaves = r.get<std::uint32_t>();
    t.leaf_begin = r.get_vector<std::uint32_t>(std::size_t{leaves} + 1);
    t.leaf_keys = r.get_vector<std::uint64_t>(std::size_t{leaves} * t.cfg.key_words());
    auto perm = r.get_vector<id_t>(h.count);
    if (!is_permutation_of_range(perm)) r.fail("tree " + std::to_string(i) + ": order is not a permutation");
    if (t.leaf_begin.front() != 0 || t.leaf_begin.back() != h.count ||
        !std::is_sorted(t.leaf_begin.begin(), t.leaf_begin.end()))
      r.fail("tree " + std::to_string(i) + ": malformed leaf boundaries");
    t.order = HilbertOrder::from_perm(std::move(perm));
    f.trees.push_back(std::move(t));
  }
  return f;
}

inline void save_forest(const HilbertForest& f, const std::string& path) {
  auto out = open_for_write(path);
  BinaryWriter w(out);
  write_forest(w, f);
  w.check(path);
}

inline HilbertForest load_forest(const std::string& path) {
  auto in = open_for_read(path);
  BinaryReader r(in, path);
  auto f = read_forest(r);
  r.expect_end();
  return f;
}

// ---------------------------------------------------------------------------
// Analytic footprints, in bytes.
namespace memory {

// One bit per dimension per point.
inline std::uint64_t sketch_bytes(std::uint64_t count, std::uint64_t dim) { return (count * dim + 7) / 8; }

// 4-bit codes whose top bit doubles as the sketch: the sketch costs nothing extra.
inline std::uint64_t shared_code_bytes(std::uint64_t count, std::uint64_t dim) { return (count * dim * 4 + 7) / 8; }

// Separate sketch and 4-bit codes, for comparison.
inline std::uint64_t unshared_code_bytes(std::uint64_t count, std::uint64_t dim) {
  return sketch_bytes(count, dim) + shared_code_bytes(count, dim);
}

inline std::uint64_t tree_bytes(const HilbertTree& t) {
  return t.order.perm.size() * sizeof(id_t) + t.leaf_begin.size() * sizeof(std::uint32_t) +
         t.leaf_keys.size() * sizeof(std::uint64_t);
}

inline std::uint64_t forest_bytes(const HilbertForest& f) {
  std::uint64_t s = 0;
  for (const auto& t : f.trees) s += tree_bytes(t);
  return s;
}

// Tree layout predicted from shape alone (leaf count from the halving split).
inline std::uint64_t tree_bytes(std::uint64_t count, std::uint64_t dim, std::uint32_t bits, std::uint32_t leaf_size) {
  if (count == 0) return 0;
  std::uint64_t leaves = 0;
  std::vector<std::uint64_t> stack{count};
  while (!stack.empty()) {  // count of leaves produced by halving
    const auto n = stack.back();
    stack.pop_back();
    if (n <= leaf_size) {
      ++leaves;
    } else {
      stack.push_back(n / 2);
      stack.push_back(n - n / 2);
    }
  }
  const std::uint64_t words = (dim * bits + 63) / 64;
  return count * sizeof(id_t) + (leaves + 1) * sizeof(std::uint32_t) + leaves * words * sizeof(std::uint64_t);
}

}  // namespace memory

}  // namespace hforest
