#pragma once

#include <span>
#include <string>
#include <vector>

#include "hforest/ann.hpp"
#include "hforest/common.hpp"
#include "hforest/compact_codes.hpp"
#include "hforest/dataset.hpp"
#include "hforest/hilbert.hpp"

namespace hforest {

struct GraphParams {
  std::uint32_t n = 1;       // Hilbert sorts
  std::uint32_t k1 = 2;      // window per sort, self excluded
  std::uint32_t k2 = 1;      // sketch-stage survivors
  std::uint32_t k_out = 15;  // neighbors per node
  std::uint64_t seed = 0;
  bool exact_final = true;
  std::uint32_t bits_per_axis = kDefaultBitsPerAxis;

  void validate() const {
    if (n < 1) throw Error("n must be >= 1");
    if (k1 < 2) throw Error("k1 must be >= 2");
    if (k2 < 1) throw Error("k2 must be >= 1");
    if (k_out < 1) throw Error("k_out must be >= 1");
    if (bits_per_axis < 1 || bits_per_axis > 32) throw Error("bits_per_axis must be in [1, 32]");
  }
};

struct KnnGraph {
  std::uint32_t k_out = 1;
  std::vector<id_t> ids;  // count x k_out, ascending distance, ascending id on ties

  KnnGraph() = default;
  KnnGraph(std::size_t count, std::uint32_t k) : k_out(k), ids(count * k, 0) {}

  std::size_t size() const { return k_out ? ids.size() / k_out : 0; }
  std::span<const id_t> row(std::size_t i) const { return {ids.data() + i * k_out, k_out}; }
  std::span<id_t> row(std::size_t i) { return {ids.data() + i * k_out, k_out}; }

  void validate() const {
    if (k_out == 0) throw Error("graph k_out must be positive");
    if (ids.size() % k_out != 0) throw Error("graph payload is not a whole number of rows");
    std::vector<id_t> tmp;
    for (std::size_t i = 0; i < size(); ++i) {
      auto r = row(i);
      for (auto id : r) {
        if (id >= size()) throw Error("node " + std::to_string(i) + " links to invalid id " + std::to_string(id));
        if (id == i) throw Error("node " + std::to_string(i) + " has a self-loop");
      }
      tmp.assign(r.begin(), r.end());
      std::sort(tmp.begin(), tmp.end());
      if (std::adjacent_find(tmp.begin(), tmp.end()) != tmp.end())
        throw Error("node " + std::to_string(i) + " has a duplicate neighbor");
    }
  }

  bool operator==(const KnnGraph&) const = default;
};

struct GraphStats {
  std::uint64_t c1_slots = 0;
  std::uint64_t max_c1_per_node = 0;
  std::uint64_t distance_evals = 0;
  std::uint64_t scratch_peak_bytes = 0;  // measured per-pass scratch high-water mark
};

// Analytic per-pass scratch: one key table and one permutation. Independent of n.
inline std::uint64_t peak_transient_memory(const GraphParams& params, std::uint64_t count, std::uint64_t dim) {
  const std::uint64_t words = (dim * params.bits_per_axis + 63) / 64;
  return count * (words * sizeof(std::uint64_t) + sizeof(id_t));
}

// [begin, end) of the k1+1 positions nearest to `position`; the caller skips `position` itself.
inline std::pair<std::size_t, std::size_t> window_excluding_self(std::size_t count, std::size_t position,
                                                                 std::size_t k1) {
  return window_around(count, position, k1 + 1);
}

inline KnnGraph build_graph(const VectorDataset& ds, const GraphParams& params, GraphStats* stats = nullptr) {
  params.validate();
  const std::size_t count = ds.size();
  if (count <= params.k_out)
    throw Error("build_graph: need more than k_out=" + std::to_string(params.k_out) + " points, got " +
                std::to_string(count));
  if (count > UINT32_MAX) throw Error("build_graph: more than 2^32 points");
  if (params.k1 < params.k_out) throw Error("k1 must be >= k_out");
  if (params.k2 < params.k_out) throw Error("k2 must be >= k_out");

  const auto bounds = Bounds::of(ds);
  const auto codes = CodeTable::build(ds, fit_quantizer(ds));
  std::vector<HammingTopK> sel(count, HammingTopK(params.k2));
  std::vector<std::uint64_t> c1_sizes(count, 0);

  // Scratch reused by every pass.
  KeyTable keys;
  std::vector<id_t> perm;
  std::uint64_t scratch_peak = 0;

  for (std::uint32_t t = 0; t < params.n; ++t) {
    const auto cfg = CurveConfig::derived(ds.dim(), params.bits_per_axis, params.seed, t);
    keys = encode_all(ds, bounds, cfg, std::move(keys));
    sort_by_keys(keys, perm);
    scratch_peak = std::max<std::uint64_t>(
        scratch_peak, keys.data.capacity() * sizeof(std::uint64_t) + perm.capacity() * sizeof(id_t));

    parallel_for(count, [&](std::size_t i) {
      const id_t self = perm[i];
      const auto sk = codes.sketch(self);
      const auto [b, e] = window_excluding_self(count, i, params.k1);
      for (std::size_t p = b; p < e; ++p) {
        if (p == i) continue;
        const id_t nb = perm[p];
        sel[self].push(codes.hamming_to(nb, sk), nb);
      }
      c1_sizes[self] += (e - b) - 1;
    });
  }

  KnnGraph g(count, params.k_out);
  std::vector<std::uint64_t> evals(count, 0);
  parallel_for(count, [&](std::size_t i) {
    const auto c2 = sel[i].finish();
    sel[i] = HammingTopK(params.k2);  // release the buffer
    std::vector<detail::Scored> scored(c2.size());
    const auto v = ds.row(i);
    if (params.exact_final) {
      for (std::size_t j = 0; j < c2.size(); ++j) scored[j] = {squared_l2(v, ds.row(c2[j])), c2[j]};
    } else {
      const AsymmetricTable table(v, codes.params());
      std::vector<std::uint8_t> c(ds.dim());
      for (std::size_t j = 0; j < c2.size(); ++j) {
        codes.decode_row(c2[j], c);
        scored[j] = {table.distance(c), c2[j]};
      }
    }
    detail::select_topk(scored, g.row(i));
    evals[i] = c2.size();
  });

  if (stats) {
    *stats = {};
    for (std::size_t i = 0; i < count; ++i) {
      stats->c1_slots += c1_sizes[i];
      stats->max_c1_per_node = std::max(stats->max_c1_per_node, c1_sizes[i]);
      stats->distance_evals += evals[i];
    }
    stats->scratch_peak_bytes = scratch_peak;
  }
  return g;
}

// Mean over nodes of |g_i ∩ truth_i| / k_out.
inline double graph_recall(const KnnGraph& g, const KnnGraph& truth) {
  if (g.size() != truth.size() || g.k_out != truth.k_out) throw Error("graph_recall: shape mismatch");
  if (g.size() == 0) return 1.0;
  std::uint64_t hits = 0;
  std::vector<id_t> a, b;
  for (std::size_t i = 0; i < g.size(); ++i) {
    a.assign(g.row(i).begin(), g.row(i).end());
    b.assign(truth.row(i).begin(), truth.row(i).end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<id_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    hits += common.size();
  }
  return static_cast<double>(hits) / (static_cast<double>(g.size()) * g.k_out);
}

// Recall restricted to `nodes`, whose true rows are truth_rows.row(j) for nodes[j].
inline double graph_recall_sampled(const KnnGraph& g, std::span<const id_t> nodes, const ResultSet& truth_rows) {
  if (truth_rows.query_count() != nodes.size() || truth_rows.k != g.k_out)
    throw Error("graph_recall_sampled: shape mismatch");
  if (nodes.empty()) return 1.0;
  std::uint64_t hits = 0;
  std::vector<id_t> a, b;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    a.assign(g.row(nodes[j]).begin(), g.row(nodes[j]).end());
    b.assign(truth_rows.row(j).begin(), truth_rows.row(j).end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<id_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    hits += common.size();
  }
  return static_cast<double>(hits) / (static_cast<double>(nodes.size()) * g.k_out);
}

inline void write_graph(std::ostream& out, const KnnGraph& g) {
  g.validate();
  BinaryWriter w(out);
  format::write_header(w, format::kGraphMagic, g.k_out, g.size());
  w.put_span(std::span<const id_t>(g.ids));
  w.check("graph file");
}

inline KnnGraph read_graph(std::istream& in, const std::string& what = "graph file") {
  BinaryReader r(in, what);
  const auto h = format::read_header(r, format::kGraphMagic);
  KnnGraph g;
  g.k_out = h.width;
  g.ids = r.get_vector<id_t>(std::size_t{h.count} * h.width);
  r.expect_end();
  try {
    g.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return g;
}

inline void save_graph(const KnnGraph& g, const std::string& path) {
  auto out = open_for_write(path);
  write_graph(out, g);
}

inline KnnGraph load_graph(const std::string& path) {
  auto in = open_for_read(path);
  return read_graph(in, path);
}

}  // namespace hforest
