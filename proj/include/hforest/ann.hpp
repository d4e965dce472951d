#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hforest/common.hpp"
#include "hforest/compact_codes.hpp"
#include "hforest/dataset.hpp"
#include "hforest/hilbert.hpp"
#include "hforest/hilbert_tree.hpp"

namespace hforest {

struct SearchParams {
  std::uint32_t n = 1;    // trees used
  std::uint32_t k1 = 1;   // window per tree
  std::uint32_t k2 = 1;   // sketch-stage survivors
  std::uint32_t h = 0;    // master-order expansion radius
  std::uint32_t k = 30;   // final neighbors
  bool exact_final = false;

  void validate() const {
    if (n < 1) throw Error("n must be >= 1");
    if (k1 < 1) throw Error("k1 must be >= 1");
    if (k2 < 1) throw Error("k2 must be >= 1");
    if (k < 1) throw Error("k must be >= 1");
  }
};

// Counters of one search run. Per-query maxima check the candidate budgets.
struct SearchStats {
  std::uint64_t queries = 0;
  std::uint64_t c1_slots = 0;        // window slots harvested, duplicates included
  std::uint64_t hamming_evals = 0;
  std::uint64_t distance_evals = 0;  // full distances after expansion
  std::uint64_t max_hamming_per_query = 0;
  std::uint64_t max_distance_per_query = 0;

  void merge(const SearchStats& o) {
    queries += o.queries;
    c1_slots += o.c1_slots;
    hamming_evals += o.hamming_evals;
    distance_evals += o.distance_evals;
    max_hamming_per_query = std::max(max_hamming_per_query, o.max_hamming_per_query);
    max_distance_per_query = std::max(max_distance_per_query, o.max_distance_per_query);
  }

  bool operator==(const SearchStats&) const = default;
};

struct AnnIndex {
  std::uint64_t seed = 0;
  HilbertForest forest;
  HilbertOrder master;  // tree 0's order; codes rows follow it
  CodeTable codes;
  std::shared_ptr<const VectorDataset> data;

  std::size_t size() const { return master.size(); }
  std::uint32_t dim() const { return codes.dim(); }
  const QuantizerParams& quantizer() const { return codes.params(); }
  const Bounds& bounds() const { return forest.bounds; }
};

inline AnnIndex build_index(std::shared_ptr<const VectorDataset> ds, std::size_t n_trees,
                            std::uint32_t leaf_size = kDefaultLeafSize, std::uint64_t seed = 0,
                            std::uint32_t bits_per_axis = kDefaultBitsPerAxis) {
  if (!ds || ds->empty()) throw Error("build_index: empty dataset");
  AnnIndex idx;
  idx.seed = seed;
  idx.data = ds;
  const auto params = fit_quantizer(*ds);
  idx.forest = build_forest(*ds, n_trees, leaf_size, seed, bits_per_axis);
  idx.master = idx.forest.trees.front().order;
  idx.codes = CodeTable::build(*ds, params, idx.master.perm);
  return idx;
}

inline AnnIndex build_index(const VectorDataset& ds, std::size_t n_trees, std::uint32_t leaf_size = kDefaultLeafSize,
                            std::uint64_t seed = 0, std::uint32_t bits_per_axis = kDefaultBitsPerAxis) {
  return build_index(std::make_shared<const VectorDataset>(ds), n_trees, leaf_size, seed, bits_per_axis);
}

// C1 of every query: the k1-window of each of the first n trees, duplicates kept.
inline std::vector<std::vector<id_t>> collect_candidates(const AnnIndex& index, const VectorDataset& queries,
                                                         std::size_t n, std::size_t k1) {
  if (n == 0 || n > index.forest.size()) throw Error("n must be in [1, forest size]");
  if (k1 == 0) throw Error("k1 must be >= 1");
  std::vector<std::vector<id_t>> c1(queries.size());
  for (std::size_t t = 0; t < n; ++t) {
    const auto& tree = index.forest.trees[t];
    const auto pos = batch_positions(tree, *index.data, index.bounds(), queries);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto w = extract_candidates(tree, pos[q], k1);
      c1[q].insert(c1[q].end(), w.begin(), w.end());
    }
  }
  return c1;
}

// Master positions within h of each id's position, ascending and unique.
inline std::vector<std::size_t> expand_master_positions(const HilbertOrder& master, std::span<const id_t> ids,
                                                        std::size_t h) {
  std::vector<std::size_t> pos;
  pos.reserve(ids.size() * (2 * h + 1));
  const std::size_t count = master.size();
  for (auto id : ids) {
    const std::size_t p = master.inverse[id];
    const std::size_t b = p > h ? p - h : 0;
    const std::size_t e = std::min(count, p + h + 1);
    for (std::size_t x = b; x < e; ++x) pos.push_back(x);
  }
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

// Ids of the expansion, in master order.
inline std::vector<id_t> expand_master(const AnnIndex& index, std::span<const id_t> ids, std::size_t h) {
  const auto pos = expand_master_positions(index.master, ids, h);
  std::vector<id_t> out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out[i] = index.master.perm[pos[i]];
  return out;
}

namespace detail {
struct Scored {
  float dist;
  id_t id;
  friend bool operator<(const Scored& a, const Scored& b) { return a.dist != b.dist ? a.dist < b.dist : a.id < b.id; }
};

inline void select_topk(std::vector<Scored>& s, std::span<id_t> out) {
  const std::size_t keep = std::min(out.size(), s.size());
  std::partial_sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(keep), s.end());
  for (std::size_t i = 0; i < keep; ++i) out[i] = s[i].id;
}

inline VectorDataset slice_rows(const VectorDataset& ds, std::size_t begin, std::size_t end) {
  auto all = ds.data();
  return VectorDataset(ds.dim(), std::vector<float>(all.begin() + static_cast<std::ptrdiff_t>(begin * ds.dim()),
                                                   all.begin() + static_cast<std::ptrdiff_t>(end * ds.dim())));
}
}  // namespace detail

// Candidate slots harvested per query: n windows of min(k1, N) ids.
inline std::uint64_t c1_budget(std::uint64_t n, std::uint64_t k1, std::uint64_t count) {
  return n * std::min(k1, count);
}

// Upper bound on full-distance evaluations per query after expansion.
inline std::uint64_t expansion_budget(std::uint64_t k2, std::uint64_t h) { return k2 * (2 * h + 1); }

inline constexpr std::size_t kQueryBlock = 256;

namespace detail {

inline void check_search_args(const AnnIndex& index, const VectorDataset& queries, const SearchParams& params) {
  params.validate();
  if (index.size() == 0 || !index.data) throw Error("search: index is empty or has no attached dataset");
  if (params.n > index.forest.size())
    throw Error("n=" + std::to_string(params.n) + " exceeds forest size " + std::to_string(index.forest.size()));
  if (!queries.empty() && queries.dim() != index.dim())
    throw Error("search: queries have dimension " + std::to_string(queries.dim()) + ", index has " +
                std::to_string(index.dim()));
}

// C2 of each query in `block`: its tree windows streamed through a bounded
// Hamming top-k2, one pass per tree over the whole block.
inline std::vector<std::vector<id_t>> sketch_stage(const AnnIndex& index, const VectorDataset& block,
                                                   const SearchParams& params, std::span<SearchStats> stats) {
  const std::size_t count = index.size();
  std::vector<Sketch> qsk(block.size());
  std::vector<HammingTopK> sel(block.size(), HammingTopK(params.k2));
  parallel_for(block.size(), [&](std::size_t i) { qsk[i] = sketch_of(quantize(block.row(i), index.quantizer())); });
  for (std::size_t t = 0; t < params.n; ++t) {
    const auto& tree = index.forest.trees[t];
    const auto pos = batch_positions(tree, *index.data, index.bounds(), block);
    parallel_for(block.size(), [&](std::size_t i) {
      const auto [b, e] = window_around(count, pos[i], params.k1);
      for (std::size_t p = b; p < e; ++p) {
        const id_t id = tree.order.perm[p];
        sel[i].push(index.codes.hamming_to(index.master.inverse[id], qsk[i]), id);
      }
      stats[i].c1_slots += e - b;
      stats[i].hamming_evals += e - b;
    });
  }
  std::vector<std::vector<id_t>> c2(block.size());
  parallel_for(block.size(), [&](std::size_t i) { c2[i] = sel[i].finish(); });
  return c2;
}

}  // namespace detail

// Sketch-stage survivors (C2) of every query, ascending (hamming, id).
inline std::vector<std::vector<id_t>> sketch_candidates(const AnnIndex& index, const VectorDataset& queries,
                                                        const SearchParams& params) {
  detail::check_search_args(index, queries, params);
  std::vector<SearchStats> st(queries.size());
  std::vector<std::vector<id_t>> out;
  for (std::size_t qb = 0; qb < queries.size(); qb += kQueryBlock) {
    const std::size_t qe = std::min(queries.size(), qb + kQueryBlock);
    auto c2 = detail::sketch_stage(index, detail::slice_rows(queries, qb, qe), params,
                                   std::span<SearchStats>(st).subspan(qb, qe - qb));
    for (auto& c : c2) out.push_back(std::move(c));
  }
  return out;
}

// Three-stage search: forest windows -> sketch top-k2 -> master expansion ->
// top-k by distance. Rows hold min(k, N) ids; k1 and k2 must be at least that.
inline ResultSet search(const AnnIndex& index, const VectorDataset& queries, const SearchParams& params,
                        SearchStats* stats = nullptr) {
  detail::check_search_args(index, queries, params);
  const std::size_t count = index.size();
  const auto k = static_cast<std::uint32_t>(std::min<std::size_t>(params.k, count));
  if (params.k1 < k) throw Error("k1 must be >= k (" + std::to_string(k) + ")");
  if (params.k2 < k) throw Error("k2 must be >= k (" + std::to_string(k) + ")");

  ResultSet rs(k, queries.size());
  const auto& ds = *index.data;
  std::vector<SearchStats> per_query(queries.size());

  for (std::size_t qb = 0; qb < queries.size(); qb += kQueryBlock) {
    const std::size_t qe = std::min(queries.size(), qb + kQueryBlock);
    const auto block = detail::slice_rows(queries, qb, qe);
    const auto c2 = detail::sketch_stage(index, block, params, std::span<SearchStats>(per_query).subspan(qb, qe - qb));

    parallel_for(block.size(), [&](std::size_t i) {
      const auto q = block.row(i);
      const auto positions = expand_master_positions(index.master, c2[i], params.h);
      std::vector<detail::Scored> scored(positions.size());
      if (params.exact_final) {
        for (std::size_t j = 0; j < positions.size(); ++j) {
          const id_t id = index.master.perm[positions[j]];
          scored[j] = {squared_l2(q, ds.row(id)), id};
        }
      } else {
        // Rows are read in master order, which is contiguous memory.
        const AsymmetricTable table(q, index.quantizer());
        std::vector<std::uint8_t> codes(index.dim());
        for (std::size_t j = 0; j < positions.size(); ++j) {
          index.codes.decode_row(positions[j], codes);
          scored[j] = {table.distance(codes), index.master.perm[positions[j]]};
        }
      }
      detail::select_topk(scored, rs.row(qb + i));
      auto& st = per_query[qb + i];
      st.queries = 1;
      st.distance_evals = positions.size();
      st.max_hamming_per_query = st.hamming_evals;
      st.max_distance_per_query = st.distance_evals;
    });
  }
  if (stats) {
    *stats = {};
    for (const auto& s : per_query) stats->merge(s);
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Serialization: index header, forest, master tree index, codes.

inline void write_index(std::ostream& out, const AnnIndex& idx) {
  BinaryWriter w(out);
  format::write_header(w, format::kIndexMagic, idx.dim(), idx.size());
  w.put(idx.seed);
  w.put(std::uint32_t{0});  // master order = tree 0
  write_forest(w, idx.forest);
  idx.codes.write(w);
  w.check("index file");
}

inline void save_index(const AnnIndex& idx, const std::string& path) {
  auto out = open_for_write(path);
  write_index(out, idx);
}

// The dataset must be the one the index was built from.
inline AnnIndex read_index(std::istream& in, std::shared_ptr<const VectorDataset> ds,
                           const std::string& what = "index file") {
  BinaryReader r(in, what);
  const auto h = format::read_header(r, format::kIndexMagic);
  AnnIndex idx;
  idx.seed = r.get<std::uint64_t>();
  const auto master_tree = r.get<std::uint32_t>();
  idx.forest = read_forest(r);
  idx.codes = CodeTable::read(r);
  r.expect_end();
  if (idx.forest.trees.empty()) r.fail("index has no trees");
  if (master_tree >= idx.forest.size()) r.fail("master tree index out of range");
  if (idx.forest.point_count() != h.count || idx.codes.rows() != h.count || idx.codes.dim() != h.width)
    r.fail("component shapes disagree with header");
  if (!ds || ds->dim() != h.width || ds->size() != h.count)
    r.fail("dataset shape does not match the index (" + std::to_string(h.count) + " x " + std::to_string(h.width) + ")");
  if (Bounds::of(*ds) != idx.forest.bounds) r.fail("dataset does not match the index (bounds differ)");
  idx.master = idx.forest.trees[master_tree].order;
  idx.data = std::move(ds);
  return idx;
}

inline AnnIndex load_index(const std::string& path, std::shared_ptr<const VectorDataset> ds) {
  auto in = open_for_read(path);
  return read_index(in, std::move(ds), path);
}

}  // namespace hforest
