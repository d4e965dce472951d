#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hforest/common.hpp"

namespace hforest {

// Row-major float32 vectors; row index is the stable point id.
class VectorDataset {
 public:
  VectorDataset() = default;
  explicit VectorDataset(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) throw Error("dataset dimension must be positive");
  }
  VectorDataset(std::uint32_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
    if (dim == 0) throw Error("dataset dimension must be positive");
    if (data_.size() % dim != 0) throw Error("dataset payload is not a whole number of rows");
    validate();
  }

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return dim_ ? data_.size() / dim_ : 0; }
  bool empty() const { return data_.empty(); }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<const float> data() const { return data_; }

  void push_back(std::span<const float> v) {
    if (v.size() != dim_) throw Error("row has " + std::to_string(v.size()) + " coordinates, expected " +
                                      std::to_string(dim_));
    for (float x : v)
      if (!std::isfinite(x)) throw Error("non-finite coordinate in row " + std::to_string(size()));
    data_.insert(data_.end(), v.begin(), v.end());
  }

  // Throws naming the first row with a non-finite coordinate.
  void validate() const {
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i])) throw Error("non-finite coordinate in row " + std::to_string(i / dim_));
  }

  bool operator==(const VectorDataset&) const = default;

 private:
  std::uint32_t dim_ = 0;
  std::vector<float> data_;
};

inline float squared_l2(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const float d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// query_count rows of k ids, each row ascending by distance (ascending id on ties).
struct ResultSet {
  std::uint32_t k = 1;
  std::vector<id_t> ids;

  ResultSet() = default;
  ResultSet(std::uint32_t k_, std::size_t queries) : k(k_), ids(queries * k_, 0) {
    if (k_ == 0) throw Error("result width k must be positive");
  }

  std::size_t query_count() const { return ids.size() / k; }
  std::span<const id_t> row(std::size_t q) const { return {ids.data() + q * k, k}; }
  std::span<id_t> row(std::size_t q) { return {ids.data() + q * k, k}; }

  // Checks per-row uniqueness and, when given, id < point_count.
  void validate(std::optional<std::size_t> point_count = std::nullopt) const {
    if (k == 0) throw Error("result width k must be positive");
    if (ids.size() % k != 0) throw Error("result payload is not a whole number of rows");
    std::vector<id_t> tmp;
    for (std::size_t q = 0; q < query_count(); ++q) {
      auto r = row(q);
      if (point_count)
        for (auto id : r)
          if (id >= *point_count)
            throw Error("row " + std::to_string(q) + " references id " + std::to_string(id) +
                        " outside [0, " + std::to_string(*point_count) + ")");
      tmp.assign(r.begin(), r.end());
      std::sort(tmp.begin(), tmp.end());
      if (std::adjacent_find(tmp.begin(), tmp.end()) != tmp.end())
        throw Error("row " + std::to_string(q) + " contains a duplicate id");
    }
  }

  bool operator==(const ResultSet&) const = default;
};

namespace format {
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kVectorMagic = make_magic('H', 'F', 'V', 'E');
inline constexpr std::uint32_t kResultMagic = make_magic('H', 'F', 'R', 'S');
inline constexpr std::uint32_t kGraphMagic = make_magic('H', 'F', 'K', 'G');
inline constexpr std::uint32_t kIndexMagic = make_magic('H', 'F', 'I', 'X');
inline constexpr std::uint32_t kForestMagic = make_magic('H', 'F', 'F', 'O');
inline constexpr std::uint32_t kCodesMagic = make_magic('H', 'F', 'C', 'T');

struct Header {
  std::uint32_t magic;
  std::uint32_t version;
  std::uint32_t width;  // dim for vectors, k for results
  std::uint32_t count;
};

inline void write_header(BinaryWriter& w, std::uint32_t magic, std::uint32_t width, std::size_t count) {
  if (count > UINT32_MAX) throw Error("row count exceeds 32-bit header field");
  w.put(magic);
  w.put(kVersion);
  w.put(width);
  w.put(static_cast<std::uint32_t>(count));
}

inline Header read_header(BinaryReader& r, std::uint32_t magic) {
  Header h{};
  try {
    h.magic = r.get<std::uint32_t>();
    h.version = r.get<std::uint32_t>();
    h.width = r.get<std::uint32_t>();
    h.count = r.get<std::uint32_t>();
  } catch (const Error&) {
    r.fail("malformed header (file shorter than 16 bytes)");
  }
  if (h.magic != magic) r.fail("malformed header (bad magic)");
  if (h.version != kVersion) r.fail("unsupported version " + std::to_string(h.version));
  if (h.width == 0) r.fail("malformed header (zero width)");
  return h;
}
}  // namespace format

inline void write_vectors(std::ostream& out, const VectorDataset& ds) {
  BinaryWriter w(out);
  format::write_header(w, format::kVectorMagic, ds.dim(), ds.size());
  w.put_span(ds.data());
  w.check("vector file");
}

inline VectorDataset read_vectors(std::istream& in, const std::string& what = "vector file") {
  BinaryReader r(in, what);
  const auto h = format::read_header(r, format::kVectorMagic);
  auto payload = r.get_vector<float>(std::size_t{h.count} * h.width);
  r.expect_end();
  try {
    return VectorDataset(h.width, std::move(payload));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

inline void save_vectors(const VectorDataset& ds, const std::string& path) {
  auto out = open_for_write(path);
  write_vectors(out, ds);
}

inline VectorDataset load_vectors(const std::string& path) {
  auto in = open_for_read(path);
  return read_vectors(in, path);
}

inline void write_results(std::ostream& out, const ResultSet& rs, std::uint32_t magic = format::kResultMagic) {
  rs.validate();
  BinaryWriter w(out);
  format::write_header(w, magic, rs.k, rs.query_count());
  w.put_span(std::span<const id_t>(rs.ids));
  w.check("result file");
}

inline ResultSet read_results(std::istream& in, const std::string& what = "result file",
                              std::uint32_t magic = format::kResultMagic) {
  BinaryReader r(in, what);
  const auto h = format::read_header(r, magic);
  ResultSet rs;
  rs.k = h.width;
  rs.ids = r.get_vector<id_t>(std::size_t{h.count} * h.width);
  r.expect_end();
  try {
    rs.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return rs;
}

inline void save_results(const ResultSet& rs, const std::string& path) {
  auto out = open_for_write(path);
  write_results(out, rs);
}

inline ResultSet load_results(const std::string& path) {
  auto in = open_for_read(path);
  return read_results(in, path);
}

}  // namespace hforest
