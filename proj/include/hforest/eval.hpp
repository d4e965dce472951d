#pragma once

#include <chrono>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hforest/ann.hpp"
#include "hforest/common.hpp"
#include "hforest/dataset.hpp"
#include "hforest/knn_graph.hpp"

namespace hforest {

// Exact k-NN by squared L2, ascending id on ties.
inline ResultSet brute_force_knn(const VectorDataset& ds, const VectorDataset& queries, std::size_t k) {
  if (k == 0) throw Error("k must be >= 1");
  if (k > ds.size())
    throw Error("k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(ds.size()));
  if (!queries.empty() && queries.dim() != ds.dim()) throw Error("brute_force_knn: dimension mismatch");
  ResultSet rs(static_cast<std::uint32_t>(k), queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    std::vector<detail::Scored> s(ds.size());
    const auto qv = queries.row(q);
    for (std::size_t i = 0; i < ds.size(); ++i) s[i] = {squared_l2(qv, ds.row(i)), static_cast<id_t>(i)};
    detail::select_topk(s, rs.row(q));
  });
  return rs;
}

// Exact neighbor rows of the given nodes, self excluded.
inline ResultSet brute_force_graph_rows(const VectorDataset& ds, std::span<const id_t> nodes, std::size_t k_out) {
  if (k_out == 0 || k_out >= ds.size()) throw Error("k_out must be in [1, count)");
  ResultSet rs(static_cast<std::uint32_t>(k_out), nodes.size());
  parallel_for(nodes.size(), [&](std::size_t j) {
    const id_t self = nodes[j];
    std::vector<detail::Scored> s;
    s.reserve(ds.size() - 1);
    const auto v = ds.row(self);
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (i != self) s.push_back({squared_l2(v, ds.row(i)), static_cast<id_t>(i)});
    detail::select_topk(s, rs.row(j));
  });
  return rs;
}

inline KnnGraph brute_force_graph(const VectorDataset& ds, std::size_t k_out) {
  std::vector<id_t> all(ds.size());
  std::iota(all.begin(), all.end(), id_t{0});
  auto rows = brute_force_graph_rows(ds, all, k_out);
  KnnGraph g;
  g.k_out = rows.k;
  g.ids = std::move(rows.ids);
  return g;
}

// Mean over queries of |first k of result ∩ first k of truth| / k.
inline double recall_at_k(const ResultSet& result, const ResultSet& truth, std::size_t k) {
  if (result.query_count() != truth.query_count()) throw Error("recall_at_k: query count mismatch");
  if (k == 0 || k > result.k || k > truth.k) throw Error("recall_at_k: k exceeds result width");
  if (truth.query_count() == 0) return 1.0;
  std::uint64_t hits = 0;
  std::vector<id_t> a, b, common;
  for (std::size_t q = 0; q < truth.query_count(); ++q) {
    a.assign(result.row(q).begin(), result.row(q).begin() + static_cast<std::ptrdiff_t>(k));
    b.assign(truth.row(q).begin(), truth.row(q).begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    common.clear();
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    hits += common.size();
  }
  return static_cast<double>(hits) / (static_cast<double>(truth.query_count()) * k);
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SynthKind { uniform, gaussian_mixture };

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "uniform") return SynthKind::uniform;
  if (s == "gaussian-mixture") return SynthKind::gaussian_mixture;
  throw Error("unknown generator '" + s + "' (expected uniform or gaussian-mixture)");
}

inline std::string to_string(SynthKind k) { return k == SynthKind::uniform ? "uniform" : "gaussian-mixture"; }

struct SynthSpec {
  std::size_t count = 0;
  std::uint32_t dim = 0;
  SynthKind kind = SynthKind::gaussian_mixture;
  std::uint64_t seed = 0;
  std::uint32_t clusters = 1000;
  float cluster_spread = 0.5f;  // per-coordinate std of points around their center; centers have std 1
  std::uint64_t stream = 0;      // independent draws from the same mixture (e.g. 1 for queries)

  nlohmann::json describe() const {
    return {{"count", count},     {"dim", dim},   {"generator", to_string(kind)}, {"seed", seed},
            {"clusters", clusters}, {"cluster_spread", cluster_spread}, {"stream", stream}};
  }
};

inline std::vector<float> mixture_centers(const SynthSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, 0xC3A7E5ULL));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> c(std::size_t{spec.clusters} * spec.dim);
  for (auto& x : c) x = normal(rng);
  return c;
}

// Uniform draws from [0,1)^d, or a mixture whose centers depend only on seed
// and whose points depend on (seed, stream).
inline VectorDataset synth_dataset(const SynthSpec& spec) {
  if (spec.count == 0) throw Error("synth_dataset: count must be >= 1");
  if (spec.dim == 0) throw Error("synth_dataset: dim must be >= 1");
  std::vector<float> data(spec.count * spec.dim);
  std::mt19937_64 rng(derive_seed(spec.seed, 1 + spec.stream));
  if (spec.kind == SynthKind::uniform) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& x : data) x = u(rng);
  } else {
    if (spec.clusters == 0) throw Error("synth_dataset: clusters must be >= 1");
    const auto centers = mixture_centers(spec);
    std::uniform_int_distribution<std::uint32_t> pick(0, spec.clusters - 1);
    std::normal_distribution<float> normal(0.0f, spec.cluster_spread);
    for (std::size_t i = 0; i < spec.count; ++i) {
      const float* c = centers.data() + std::size_t{pick(rng)} * spec.dim;
      for (std::uint32_t j = 0; j < spec.dim; ++j) data[i * spec.dim + j] = c[j] + normal(rng);
    }
  }
  return VectorDataset(spec.dim, std::move(data));
}

inline VectorDataset synth_dataset(std::size_t count, std::uint32_t dim, SynthKind kind, std::uint64_t seed) {
  SynthSpec s;
  s.count = count;
  s.dim = dim;
  s.kind = kind;
  s.seed = seed;
  return synth_dataset(s);
}

// ---------------------------------------------------------------------------
// Run reports and sweeps

struct RunReport {
  std::string task;  // "search" or "graph"
  nlohmann::json params;
  double recall = 0.0;
  double wall_seconds = 0.0;
  nlohmann::json counters;
  std::uint64_t seed = 0;
  nlohmann::json dataset;

  nlohmann::json to_json() const {
    return {{"task", task},       {"params", params}, {"recall", recall}, {"wall_seconds", wall_seconds},
            {"counters", counters}, {"seed", seed},     {"dataset", dataset}};
  }

  // One line, no trailing newline.
  std::string to_line() const { return to_json().dump(); }
};

inline nlohmann::json to_json(const SearchParams& p) {
  return {{"n", p.n}, {"k1", p.k1}, {"k2", p.k2}, {"h", p.h}, {"k", p.k}, {"exact_final", p.exact_final}};
}

inline nlohmann::json to_json(const GraphParams& p) {
  return {{"n", p.n},       {"k1", p.k1},   {"k2", p.k2}, {"k_out", p.k_out}, {"seed", p.seed},
          {"exact_final", p.exact_final}, {"bits_per_axis", p.bits_per_axis}};
}

inline nlohmann::json to_json(const SearchStats& s) {
  return {{"queries", s.queries},
          {"c1_slots", s.c1_slots},
          {"hamming_evals", s.hamming_evals},
          {"distance_evals", s.distance_evals},
          {"max_hamming_per_query", s.max_hamming_per_query},
          {"max_distance_per_query", s.max_distance_per_query}};
}

inline nlohmann::json to_json(const GraphStats& s) {
  return {{"c1_slots", s.c1_slots},
          {"max_c1_per_node", s.max_c1_per_node},
          {"distance_evals", s.distance_evals},
          {"scratch_peak_bytes", s.scratch_peak_bytes}};
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline RunReport run_search(const AnnIndex& index, const VectorDataset& queries, const ResultSet& truth,
                            const SearchParams& p, ResultSet* out = nullptr) {
  SearchStats st;
  Stopwatch sw;
  auto rs = search(index, queries, p, &st);
  RunReport r;
  r.task = "search";
  r.wall_seconds = sw.seconds();
  r.params = to_json(p);
  r.recall = recall_at_k(rs, truth, std::min<std::size_t>({p.k, rs.k, truth.k}));
  r.counters = to_json(st);
  r.seed = index.seed;
  r.dataset = {{"count", index.size()}, {"dim", index.dim()}, {"queries", queries.size()}};
  if (out) *out = std::move(rs);
  return r;
}

// One report per grid point, in grid order.
inline std::vector<RunReport> sweep(const AnnIndex& index, const VectorDataset& queries, const ResultSet& truth,
                                    std::span<const SearchParams> grid) {
  if (grid.empty()) throw Error("sweep: empty parameter grid");
  std::vector<RunReport> out;
  for (const auto& p : grid) out.push_back(run_search(index, queries, truth, p));
  return out;
}

// Graph recall is measured on `nodes` (all nodes when empty) against exact rows.
inline RunReport run_graph(const VectorDataset& ds, const GraphParams& p, std::span<const id_t> nodes,
                           const ResultSet& truth_rows, KnnGraph* out = nullptr) {
  GraphStats st;
  Stopwatch sw;
  auto g = build_graph(ds, p, &st);
  RunReport r;
  r.task = "graph";
  r.wall_seconds = sw.seconds();
  r.params = to_json(p);
  r.recall = graph_recall_sampled(g, nodes, truth_rows);
  r.counters = to_json(st);
  r.seed = p.seed;
  r.dataset = {{"count", ds.size()}, {"dim", ds.dim()}, {"evaluated_nodes", nodes.size()}};
  if (out) *out = std::move(g);
  return r;
}

inline std::vector<RunReport> sweep(const VectorDataset& ds, std::span<const GraphParams> grid,
                                    std::span<const id_t> nodes, const ResultSet& truth_rows) {
  if (grid.empty()) throw Error("sweep: empty parameter grid");
  std::vector<RunReport> out;
  for (const auto& p : grid) out.push_back(run_graph(ds, p, nodes, truth_rows));
  return out;
}

// Deterministic sample of `m` distinct node ids (all ids when m >= count), ascending.
inline std::vector<id_t> sample_nodes(std::size_t count, std::size_t m, std::uint64_t seed) {
  auto p = random_permutation(static_cast<std::uint32_t>(count), derive_seed(seed, 0x5A3B1EULL));
  p.resize(std::min(m, count));
  std::sort(p.begin(), p.end());
  return p;
}

}  // namespace hforest
