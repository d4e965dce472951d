// hforest: command-line front end for index building, search, k-NN graphs and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "hforest/hforest.hpp"

using namespace hforest;

namespace {

struct Common {
  int threads = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u));
  std::string report;  // JSON lines appended here when set
};

void emit(const nlohmann::json& j, const Common& c) {
  const auto line = j.dump();
  std::cout << line << "\n";
  if (!c.report.empty()) {
    std::ofstream out(c.report, std::ios::app);
    if (!out) throw Error("cannot open report file: " + c.report);
    out << line << "\n";
  }
}

void emit(const RunReport& r, const Common& c) { emit(r.to_json(), c); }

std::shared_ptr<const VectorDataset> load_shared(const std::string& path) {
  return std::make_shared<const VectorDataset>(load_vectors(path));
}

// "a:b:c,d:e:f" -> rows of integers, each row exactly `width` long.
std::vector<std::vector<std::uint32_t>> parse_grid(const std::string& text, std::size_t width) {
  std::vector<std::vector<std::uint32_t>> rows;
  std::stringstream all(text);
  std::string item;
  while (std::getline(all, item, ',')) {
    std::vector<std::uint32_t> row;
    std::stringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) {
      try {
        std::size_t used = 0;
        const auto v = std::stoul(f, &used);
        if (used != f.size()) throw std::invalid_argument(f);
        row.push_back(static_cast<std::uint32_t>(v));
      } catch (const std::exception&) {
        throw Error("--grid: '" + f + "' is not a non-negative integer");
      }
    }
    if (row.size() != width)
      throw Error("--grid: entry '" + item + "' needs " + std::to_string(width) + " colon-separated values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("--grid: empty parameter grid");
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hilbert-forest approximate nearest neighbor search and k-NN graph construction"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: available cores, at most 8)")
      ->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  SynthSpec synth;
  std::string gen_kind = "gaussian-mixture", gen_out;
  gen->add_option("--count", synth.count, "Number of vectors")->required();
  gen->add_option("--dim", synth.dim, "Dimension")->required();
  gen->add_option("--generator", gen_kind, "uniform or gaussian-mixture")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Generator seed")->required();
  gen->add_option("--clusters", synth.clusters, "Mixture components")->capture_default_str();
  gen->add_option("--spread", synth.cluster_spread, "Per-coordinate std around a center")->capture_default_str();
  gen->add_option("--stream", synth.stream, "Independent draw from the same mixture (e.g. 1 for queries)")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output vector file")->required();

  // ground-truth
  auto* gt = app.add_subcommand("ground-truth", "Exact k-NN of queries, or exact graph rows");
  std::string gt_data, gt_queries, gt_out, gt_nodes_out;
  std::uint32_t gt_k = 30, gt_k_out = 15;
  std::size_t gt_sample = 0;
  std::uint64_t gt_seed = 0;
  bool gt_graph = false;
  gt->add_option("--data", gt_data, "Dataset vector file")->required();
  gt->add_option("--queries", gt_queries, "Query vector file (search mode)");
  gt->add_option("--k", gt_k, "Neighbors per query")->capture_default_str();
  gt->add_flag("--graph", gt_graph, "Exact k-NN graph of the dataset instead of query neighbors");
  gt->add_option("--k-out", gt_k_out, "Neighbors per node (graph mode)")->capture_default_str();
  gt->add_option("--sample", gt_sample, "Graph mode: only this many seeded random nodes (0 = all)")
      ->capture_default_str();
  gt->add_option("--seed", gt_seed, "Seed of the node sample")->capture_default_str();
  gt->add_option("--nodes-out", gt_nodes_out, "Graph mode with --sample: file receiving the sampled node ids");
  gt->add_option("--out", gt_out, "Output file (result file, or graph file for a full graph)")->required();

  // build-index
  auto* bi = app.add_subcommand("build-index", "Build a Hilbert forest index");
  std::string bi_data, bi_out;
  std::uint32_t bi_trees = 0, bi_leaf = kDefaultLeafSize, bi_bits = kDefaultBitsPerAxis;
  std::uint64_t bi_seed = 0;
  bi->add_option("--data", bi_data, "Dataset vector file")->required();
  bi->add_option("--n-trees", bi_trees, "Trees in the forest")->required();
  bi->add_option("--leaf-size", bi_leaf, "Points per tree leaf")->capture_default_str();
  bi->add_option("--bits-per-axis", bi_bits, "Grid resolution per axis")->capture_default_str();
  bi->add_option("--seed", bi_seed, "Forest seed")->required();
  bi->add_option("--out", bi_out, "Output index file")->required();

  // search
  auto* se = app.add_subcommand("search", "Approximate k-NN search over a built index");
  std::string se_index, se_data, se_queries, se_out, se_truth;
  SearchParams sp;
  se->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  se->add_option("--index", se_index, "Index file")->required();
  se->add_option("--data", se_data, "Dataset the index was built from")->required();
  se->add_option("--queries", se_queries, "Query vector file")->required();
  se->add_option("--n-trees", sp.n, "Trees to use (default: all trees in the index)");
  se->add_option("--k1", sp.k1, "Candidates per tree")->required();
  se->add_option("--k2", sp.k2, "Sketch-stage survivors")->required();
  se->add_option("--h", sp.h, "Master-order expansion radius")->required();
  se->add_option("--k", sp.k, "Neighbors returned")->capture_default_str();
  se->add_flag("--exact-final", sp.exact_final, "Re-rank with exact float distance instead of 4-bit codes");
  se->add_option("--truth", se_truth, "Ground-truth result file; adds recall to the report");
  se->add_option("--out", se_out, "Output result file")->required();
  se->add_option("--report", common.report, "Append the run report (JSON line) to this file");

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "Approximate k-NN graph by successive Hilbert sorts");
  std::string bg_data, bg_out, bg_truth, bg_nodes;
  GraphParams gp;
  bg->add_option("--data", bg_data, "Dataset vector file")->required();
  bg->add_option("--n-sorts", gp.n, "Hilbert sorts")->required();
  bg->add_option("--k1", gp.k1, "Window per sort, self excluded")->required();
  bg->add_option("--k2", gp.k2, "Sketch-stage survivors")->required();
  bg->add_option("--k-out", gp.k_out, "Neighbors per node")->capture_default_str();
  bg->add_option("--seed", gp.seed, "Seed of the axis permutations")->required();
  bg->add_flag("--exact-final", gp.exact_final, "Exact float re-rank (the default)")->default_val(true);
  bg->add_flag_function("--asymmetric-final", [&](std::int64_t) { gp.exact_final = false; },
               "Re-rank with 4-bit codes instead");
  bg->add_option("--truth", bg_truth, "Exact graph file, or sampled rows with --nodes; adds recall");
  bg->add_option("--nodes", bg_nodes, "Node id file matching sampled --truth rows");
  bg->add_option("--out", bg_out, "Output graph file")->required();
  bg->add_option("--report", common.report, "Append the run report (JSON line) to this file");

  // eval
  auto* ev = app.add_subcommand("eval", "Recall of a result or graph file against ground truth");
  std::string ev_result, ev_graph, ev_truth, ev_nodes;
  std::uint32_t ev_k = 30;
  ev->add_option("--result", ev_result, "Search result file");
  ev->add_option("--graph", ev_graph, "Graph file");
  ev->add_option("--truth", ev_truth, "Ground-truth file")->required();
  ev->add_option("--nodes", ev_nodes, "Node id file for sampled graph truth");
  ev->add_option("--k", ev_k, "recall@k for search results")->capture_default_str();
  ev->add_option("--report", common.report, "Append the evaluation (JSON line) to this file");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Run a parameter grid and report each point");
  std::string sw_task, sw_index, sw_data, sw_queries, sw_truth, sw_nodes, sw_grid;
  std::uint32_t sw_k = 30, sw_k_out = 15;
  std::uint64_t sw_seed = 0;
  bool sw_exact = false;
  sw->add_option("--task", sw_task, "search or graph")->required()->check(CLI::IsMember({"search", "graph"}));
  sw->add_option("--data", sw_data, "Dataset vector file")->required();
  sw->add_option("--index", sw_index, "Index file (search)");
  sw->add_option("--queries", sw_queries, "Query vector file (search)");
  sw->add_option("--truth", sw_truth, "Ground truth (result file, or sampled rows with --nodes)")->required();
  sw->add_option("--nodes", sw_nodes, "Node id file for sampled graph truth");
  sw->add_option("--grid", sw_grid, "search: n:k1:k2:h,...  graph: n:k1:k2,...")->required();
  sw->add_option("--k", sw_k, "Neighbors (search)")->capture_default_str();
  sw->add_option("--k-out", sw_k_out, "Neighbors per node (graph)")->capture_default_str();
  sw->add_option("--seed", sw_seed, "Graph seed")->capture_default_str();
  sw->add_flag("--exact-final", sw_exact, "Exact re-rank for search points (graph points always use exact)");
  sw->add_option("--report", common.report, "Append reports (JSON lines) to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    set_num_threads(common.threads);

    if (*gen) {
      synth.kind = parse_synth_kind(gen_kind);
      save_vectors(synth_dataset(synth), gen_out);
      nlohmann::json j = synth.describe();
      j["out"] = gen_out;
      std::cout << j.dump() << "\n";
    } else if (*gt) {
      Stopwatch watch;
      const auto ds = load_vectors(gt_data);
      if (gt_graph) {
        if (gt_sample == 0) {
          save_graph(brute_force_graph(ds, gt_k_out), gt_out);
        } else {
          if (gt_nodes_out.empty()) throw Error("--sample requires --nodes-out");
          const auto nodes = sample_nodes(ds.size(), gt_sample, gt_seed);
          save_results(brute_force_graph_rows(ds, nodes, gt_k_out), gt_out);
          ResultSet ids(1, nodes.size());
          ids.ids = nodes;
          save_results(ids, gt_nodes_out);
        }
      } else {
        if (gt_queries.empty()) throw Error("--queries is required unless --graph is given");
        save_results(brute_force_knn(ds, load_vectors(gt_queries), gt_k), gt_out);
      }
      std::cout << nlohmann::json{{"task", "ground-truth"}, {"graph", gt_graph}, {"count", ds.size()},
                                  {"out", gt_out}, {"wall_seconds", watch.seconds()}}
                       .dump()
                << "\n";
    } else if (*bi) {
      Stopwatch watch;
      const auto ds = load_shared(bi_data);
      const auto idx = build_index(ds, bi_trees, bi_leaf, bi_seed, bi_bits);
      save_index(idx, bi_out);
      std::cout << nlohmann::json{{"task", "build-index"}, {"count", idx.size()}, {"dim", idx.dim()},
                                  {"n_trees", idx.forest.size()}, {"seed", bi_seed},
                                  {"forest_bytes", memory::forest_bytes(idx.forest)},
                                  {"code_bytes", idx.codes.storage_bytes()}, {"out", bi_out},
                                  {"wall_seconds", watch.seconds()}}
                       .dump()
                << "\n";
    } else if (*se) {
      const auto ds = load_shared(se_data);
      const auto idx = load_index(se_index, ds);
      const auto qs = load_vectors(se_queries);
      if (se->count("--n-trees") == 0) sp.n = static_cast<std::uint32_t>(idx.forest.size());
      sp.validate();
      ResultSet rs;
      RunReport r;
      if (!se_truth.empty()) {
        r = run_search(idx, qs, load_results(se_truth), sp, &rs);
      } else {
        SearchStats st;
        Stopwatch watch;
        rs = search(idx, qs, sp, &st);
        r.task = "search";
        r.wall_seconds = watch.seconds();
        r.params = to_json(sp);
        r.counters = to_json(st);
        r.seed = idx.seed;
        r.dataset = {{"count", idx.size()}, {"dim", idx.dim()}, {"queries", qs.size()}};
      }
      save_results(rs, se_out);
      auto j = r.to_json();
      if (se_truth.empty()) j["recall"] = nullptr;
      emit(j, common);
    } else if (*bg) {
      gp.validate();
      const auto ds = load_vectors(bg_data);
      KnnGraph g;
      RunReport r;
      if (!bg_truth.empty() && !bg_nodes.empty()) {
        const auto nodes = load_results(bg_nodes).ids;
        r = run_graph(ds, gp, nodes, load_results(bg_truth), &g);
      } else if (!bg_truth.empty()) {
        const auto truth = load_graph(bg_truth);
        r = run_graph(ds, gp, {}, ResultSet(gp.k_out, 0), &g);
        r.recall = graph_recall(g, truth);
        r.dataset["evaluated_nodes"] = g.size();
      } else {
        r = run_graph(ds, gp, {}, ResultSet(gp.k_out, 0), &g);
      }
      save_graph(g, bg_out);
      auto j = r.to_json();
      if (bg_truth.empty()) j["recall"] = nullptr;
      emit(j, common);
    } else if (*ev) {
      if (ev_result.empty() == ev_graph.empty()) throw Error("eval needs exactly one of --result or --graph");
      RunReport r;
      if (!ev_result.empty()) {
        const auto rs = load_results(ev_result);
        const auto truth = load_results(ev_truth);
        r.task = "eval-search";
        r.recall = recall_at_k(rs, truth, ev_k);
        r.params = {{"k", ev_k}};
        r.dataset = {{"queries", rs.query_count()}};
      } else {
        const auto g = load_graph(ev_graph);
        r.task = "eval-graph";
        if (!ev_nodes.empty()) {
          const auto nodes = load_results(ev_nodes).ids;
          r.recall = graph_recall_sampled(g, nodes, load_results(ev_truth));
          r.dataset = {{"count", g.size()}, {"evaluated_nodes", nodes.size()}};
        } else {
          r.recall = graph_recall(g, load_graph(ev_truth));
          r.dataset = {{"count", g.size()}, {"evaluated_nodes", g.size()}};
        }
        r.params = {{"k_out", g.k_out}};
      }
      emit(r, common);
    } else if (*sw) {
      if (sw_task == "search") {
        if (sw_index.empty() || sw_queries.empty()) throw Error("search sweeps need --index and --queries");
        const auto ds = load_shared(sw_data);
        const auto idx = load_index(sw_index, ds);
        const auto qs = load_vectors(sw_queries);
        const auto truth = load_results(sw_truth);
        std::vector<SearchParams> grid;
        for (const auto& row : parse_grid(sw_grid, 4)) {
          SearchParams p;
          p.n = row[0];
          p.k1 = row[1];
          p.k2 = row[2];
          p.h = row[3];
          p.k = sw_k;
          p.exact_final = sw_exact;
          p.validate();
          grid.push_back(p);
        }
        for (const auto& r : sweep(idx, qs, truth, grid)) emit(r, common);
      } else {
        if (sw_nodes.empty()) throw Error("graph sweeps need --nodes with sampled --truth rows");
        const auto ds = load_vectors(sw_data);
        const auto nodes = load_results(sw_nodes).ids;
        const auto truth = load_results(sw_truth);
        std::vector<GraphParams> grid;
        for (const auto& row : parse_grid(sw_grid, 3)) {
          GraphParams p;
          p.n = row[0];
          p.k1 = row[1];
          p.k2 = row[2];
          p.k_out = sw_k_out;
          p.seed = sw_seed;
          p.validate();
          grid.push_back(p);
        }
        for (const auto& r : sweep(ds, grid, nodes, truth)) emit(r, common);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
