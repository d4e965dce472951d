#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hforest/hforest.hpp"

namespace hft {

using namespace hforest;

// Uniform floats in [-1, 1); with `grid` > 0 they are snapped to that many
// levels, which produces exact distance ties and duplicate points.
inline VectorDataset random_dataset(std::size_t count, std::uint32_t dim, std::uint64_t seed, int grid = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(count * dim);
  for (auto& x : v) {
    x = u(rng);
    if (grid > 0) x = std::round((x + 1.0f) * 0.5f * (grid - 1));
  }
  return VectorDataset(dim, std::move(v));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hforest_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string bytes_of(const VectorDataset& ds) {
  std::ostringstream o;
  write_vectors(o, ds);
  return o.str();
}

inline std::string bytes_of(const ResultSet& rs) {
  std::ostringstream o;
  write_results(o, rs);
  return o.str();
}

inline std::string bytes_of(const KnnGraph& g) {
  std::ostringstream o;
  write_graph(o, g);
  return o.str();
}

inline std::string bytes_of(const AnnIndex& idx) {
  std::ostringstream o;
  write_index(o, idx);
  return o.str();
}

// Restores the worker count on scope exit.
struct ThreadScope {
  int saved = num_threads();
  explicit ThreadScope(int n) { set_num_threads(n); }
  ~ThreadScope() { set_num_threads(saved); }
};

}  // namespace hft
