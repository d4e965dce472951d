#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hforest/common.hpp"
#include "hforest/dataset.hpp"

namespace hforest {

inline constexpr std::uint32_t kCodeLevels = 16;
inline constexpr std::uint32_t kCodeBits = 4;

// Uniform 16-level scalar quantizer over the per-dimension data range.
struct QuantizerParams {
  std::vector<float> lo;
  std::vector<float> hi;

  std::size_t dim() const { return lo.size(); }
  bool degenerate(std::size_t j) const { return !(hi[j] > lo[j]); }
  double step(std::size_t j) const {
    return degenerate(j) ? 0.0 : (static_cast<double>(hi[j]) - lo[j]) / (kCodeLevels - 1);
  }

  void validate() const {
    if (lo.size() != hi.size()) throw Error("quantizer min/max size mismatch");
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || lo[j] > hi[j])
        throw Error("invalid quantizer range on dimension " + std::to_string(j));
  }

  bool operator==(const QuantizerParams&) const = default;
};

inline QuantizerParams fit_quantizer(const VectorDataset& ds) {
  if (ds.empty()) throw Error("fit_quantizer: empty dataset");
  QuantizerParams p;
  auto first = ds.row(0);
  p.lo.assign(first.begin(), first.end());
  p.hi = p.lo;
  for (std::size_t i = 1; i < ds.size(); ++i) {
    auto r = ds.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      p.lo[j] = std::min(p.lo[j], r[j]);
      p.hi[j] = std::max(p.hi[j], r[j]);
    }
  }
  return p;
}

inline std::vector<std::size_t> degenerate_dims(const QuantizerParams& p) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < p.dim(); ++j)
    if (p.degenerate(j)) out.push_back(j);
  return out;
}

inline std::uint8_t quantize_value(float v, float lo, float hi) {
  if (!(hi > lo)) return 0;
  const double t = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo) * (kCodeLevels - 1);
  if (!(t > 0.0)) return 0;
  const double r = std::floor(t + 0.5);
  return r >= kCodeLevels - 1 ? kCodeLevels - 1 : static_cast<std::uint8_t>(r);
}

inline float dequantize_value(std::uint8_t code, float lo, float hi) {
  if (!(hi > lo) || code == 0) return lo;
  if (code >= kCodeLevels - 1) return hi;
  return static_cast<float>(lo + code * ((static_cast<double>(hi) - lo) / (kCodeLevels - 1)));
}

inline std::vector<std::uint8_t> quantize(std::span<const float> v, const QuantizerParams& p) {
  if (v.size() != p.dim()) throw Error("quantize: dimension mismatch");
  std::vector<std::uint8_t> c(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) c[j] = quantize_value(v[j], p.lo[j], p.hi[j]);
  return c;
}

inline std::vector<float> dequantize(std::span<const std::uint8_t> codes, const QuantizerParams& p) {
  if (codes.size() != p.dim()) throw Error("dequantize: dimension mismatch");
  std::vector<float> v(codes.size());
  for (std::size_t j = 0; j < codes.size(); ++j) v[j] = dequantize_value(codes[j], p.lo[j], p.hi[j]);
  return v;
}

// Fixed-width bit string; bit j lives in words[j / 64] at position j % 64.
struct Sketch {
  std::uint32_t width = 0;
  std::vector<std::uint64_t> words;

  explicit Sketch(std::uint32_t w = 0) : width(w), words((w + 63) / 64, 0) {}

  bool bit(std::size_t j) const { return (words[j / 64] >> (j % 64)) & 1u; }
  void set(std::size_t j) { words[j / 64] |= std::uint64_t{1} << (j % 64); }

  static Sketch from_bits(std::span<const int> bits) {
    Sketch s(static_cast<std::uint32_t>(bits.size()));
    for (std::size_t j = 0; j < bits.size(); ++j)
      if (bits[j]) s.set(j);
    return s;
  }

  bool operator==(const Sketch&) const = default;
};

// Bit j is the top bit of code j, i.e. code_j >= 8.
inline Sketch sketch_of(std::span<const std::uint8_t> codes) {
  Sketch s(static_cast<std::uint32_t>(codes.size()));
  for (std::size_t j = 0; j < codes.size(); ++j)
    if (codes[j] & 0x8u) s.set(j);
  return s;
}

inline std::uint32_t hamming(const Sketch& a, const Sketch& b) {
  if (a.width != b.width) throw Error("hamming: sketch width mismatch");
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

namespace detail {
// nbits (<= 64) starting at bit `pos` of a little-endian word array.
inline std::uint64_t read_bits(const std::uint64_t* words, std::uint64_t pos, std::uint32_t nbits) {
  const std::uint64_t w = pos / 64;
  const std::uint32_t off = static_cast<std::uint32_t>(pos % 64);
  std::uint64_t v = words[w] >> off;
  if (off && off + nbits > 64) v |= words[w + 1] << (64 - off);
  return nbits == 64 ? v : v & ((std::uint64_t{1} << nbits) - 1);
}

inline void write_bit(std::uint64_t* words, std::uint64_t pos) { words[pos / 64] |= std::uint64_t{1} << (pos % 64); }
}  // namespace detail

// Packed 4-bit codes, bit-sliced per row: row r occupies 4*dim consecutive
// bits holding bit 3 of every code (this run is the sketch), then bit 2,
// bit 1 and bit 0. Storage is exactly 4 bits per coordinate.
class CodeTable {
 public:
  CodeTable() = default;

  // Row r encodes ds.row(row_ids[r]); an empty row_ids means the identity.
  static CodeTable build(const VectorDataset& ds, const QuantizerParams& params,
                         std::span<const id_t> row_ids = {}) {
    if (params.dim() != ds.dim()) throw Error("CodeTable: quantizer/dataset dimension mismatch");
    if (!row_ids.empty() && row_ids.size() != ds.size()) throw Error("CodeTable: row map size mismatch");
    CodeTable t(ds.size(), ds.dim(), params);
    const std::size_t chunk = 256;
    const std::size_t chunks = (t.rows_ + chunk - 1) / chunk;
    // Chunks of 256 rows start on a word boundary (256 * 4 * dim bits).
    parallel_for(chunks, [&](std::size_t c) {
      const std::size_t end = std::min(t.rows_, (c + 1) * chunk);
      for (std::size_t r = c * chunk; r < end; ++r) {
        const auto id = row_ids.empty() ? r : row_ids[r];
        t.set_row(r, quantize(ds.row(id), params));
      }
    });
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::uint32_t dim() const { return dim_; }
  const QuantizerParams& params() const { return params_; }

  // Payload size: rows * dim * 4 bits, rounded up to a byte.
  std::uint64_t storage_bytes() const { return (std::uint64_t{rows_} * dim_ * kCodeBits + 7) / 8; }

  std::uint8_t code(std::size_t r, std::size_t j) const {
    const std::uint64_t base = row_bit(r);
    std::uint8_t c = 0;
    for (std::uint32_t plane = 0; plane < kCodeBits; ++plane)
      c = static_cast<std::uint8_t>((c << 1) | ((words_[(base + plane * dim_ + j) / 64] >> ((base + plane * dim_ + j) % 64)) & 1u));
    return c;
  }

  std::vector<std::uint8_t> codes(std::size_t r) const {
    std::vector<std::uint8_t> c(dim_);
    decode_row(r, c);
    return c;
  }

  // Codes of row r into out (dim entries), one word-run per plane.
  void decode_row(std::size_t r, std::span<std::uint8_t> out) const {
    std::fill(out.begin(), out.end(), 0);
    const std::uint64_t base = row_bit(r);
    for (std::uint32_t plane = 0; plane < kCodeBits; ++plane) {
      const std::uint8_t shift = static_cast<std::uint8_t>(kCodeBits - 1 - plane);
      for (std::uint32_t j0 = 0; j0 < dim_; j0 += 64) {
        const std::uint32_t n = std::min<std::uint32_t>(64, dim_ - j0);
        std::uint64_t bits = detail::read_bits(words_.data(), base + std::uint64_t{plane} * dim_ + j0, n);
        while (bits) {
          const int b = std::countr_zero(bits);
          out[j0 + b] |= static_cast<std::uint8_t>(1u << shift);
          bits &= bits - 1;
        }
      }
    }
  }

  Sketch sketch(std::size_t r) const {
    Sketch s(dim_);
    const std::uint64_t base = row_bit(r);
    for (std::size_t w = 0; w < s.words.size(); ++w)
      s.words[w] = detail::read_bits(words_.data(), base + 64 * w, std::min<std::uint32_t>(64, dim_ - 64 * static_cast<std::uint32_t>(w)));
    return s;
  }

  std::uint32_t hamming_to(std::size_t r, const Sketch& q) const {
    const std::uint64_t base = row_bit(r);
    std::uint32_t d = 0;
    for (std::size_t w = 0; w < q.words.size(); ++w) {
      const auto n = std::min<std::uint32_t>(64, dim_ - 64 * static_cast<std::uint32_t>(w));
      d += std::popcount(detail::read_bits(words_.data(), base + 64 * w, n) ^ q.words[w]);
    }
    return d;
  }

  std::span<const std::uint64_t> raw_words() const { return {words_.data(), payload_words()}; }

  bool operator==(const CodeTable&) const = default;

  // Serialization: header + quantizer ranges + packed payload.
  void write(BinaryWriter& w) const {
    format::write_header(w, format::kCodesMagic, dim_, rows_);
    w.put_span(std::span<const float>(params_.lo));
    w.put_span(std::span<const float>(params_.hi));
    w.put_bytes(words_.data(), storage_bytes());
  }

  static CodeTable read(BinaryReader& r) {
    const auto h = format::read_header(r, format::kCodesMagic);
    QuantizerParams p;
    p.lo = r.get_vector<float>(h.width);
    p.hi = r.get_vector<float>(h.width);
    try {
      p.validate();
    } catch (const Error& e) {
      r.fail(e.what());
    }
    CodeTable t(h.count, h.width, p);
    r.read_raw(t.words_.data(), t.storage_bytes());
    return t;
  }

 private:
  CodeTable(std::size_t rows, std::uint32_t dim, QuantizerParams params)
      : rows_(rows), dim_(dim), params_(std::move(params)) {
    words_.assign(payload_words() + 1, 0);  // one spare word for unaligned reads
  }

  std::uint64_t row_bit(std::size_t r) const { return std::uint64_t{r} * dim_ * kCodeBits; }
  std::size_t payload_words() const { return static_cast<std::size_t>((std::uint64_t{rows_} * dim_ * kCodeBits + 63) / 64); }

  void set_row(std::size_t r, std::span<const std::uint8_t> c) {
    const std::uint64_t base = row_bit(r);
    for (std::uint32_t plane = 0; plane < kCodeBits; ++plane) {
      const std::uint32_t shift = kCodeBits - 1 - plane;
      for (std::uint32_t j = 0; j < dim_; ++j)
        if ((c[j] >> shift) & 1u) detail::write_bit(words_.data(), base + std::uint64_t{plane} * dim_ + j);
    }
  }

  std::size_t rows_ = 0;
  std::uint32_t dim_ = 0;
  QuantizerParams params_;
  std::vector<std::uint64_t> words_;
};

// Streaming top-k by (hamming, id) over possibly repeated ids. Holds at most
// 2k packed entries; the result equals sort-unique-truncate of everything pushed.
class HammingTopK {
 public:
  explicit HammingTopK(std::size_t k = 1) : k_(k) {
    if (k == 0) throw Error("k2 must be >= 1");
  }

  static std::uint64_t pack(std::uint32_t dist, id_t id) { return (std::uint64_t{dist} << 32) | id; }
  static id_t id_of(std::uint64_t e) { return static_cast<id_t>(e); }

  void push(std::uint32_t dist, id_t id) {
    const auto e = pack(dist, id);
    if (e >= threshold_) return;
    if (buf_.capacity() == 0) buf_.reserve(std::min<std::size_t>(2 * k_, 1024));
    buf_.push_back(e);
    if (buf_.size() >= 2 * k_) compact();
  }

  // Ids in ascending (hamming, id) order.
  std::vector<id_t> finish() {
    compact();
    std::vector<id_t> out(buf_.size());
    for (std::size_t i = 0; i < buf_.size(); ++i) out[i] = id_of(buf_[i]);
    return out;
  }

  void clear() {
    buf_.clear();
    threshold_ = ~std::uint64_t{0};
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  void compact() {
    std::sort(buf_.begin(), buf_.end());
    buf_.erase(std::unique(buf_.begin(), buf_.end()), buf_.end());
    if (buf_.size() >= k_) {
      buf_.resize(k_);
      threshold_ = buf_.back();  // anything >= the k-th entry is a duplicate or worse
    }
  }

  std::size_t k_;
  std::vector<std::uint64_t> buf_;
  std::uint64_t threshold_ = ~std::uint64_t{0};
};

// The k2 unique candidates nearest to query_sketch in Hamming distance, ties
// by ascending id. row_of maps id -> table row (empty: identity).
inline std::vector<id_t> sketch_topk(std::span<const id_t> candidates, const Sketch& query_sketch,
                                     const CodeTable& table, std::size_t k2, std::span<const id_t> row_of = {}) {
  if (k2 == 0) throw Error("k2 must be >= 1");
  if (query_sketch.width != table.dim()) throw Error("sketch_topk: sketch width mismatch");
  std::vector<id_t> uniq(candidates.begin(), candidates.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::uint64_t> scored(uniq.size());
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    const auto row = row_of.empty() ? uniq[i] : row_of[uniq[i]];
    scored[i] = HammingTopK::pack(table.hamming_to(row, query_sketch), uniq[i]);
  }
  const std::size_t keep = std::min(k2, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end());
  std::vector<id_t> out(keep);
  for (std::size_t i = 0; i < keep; ++i) out[i] = HammingTopK::id_of(scored[i]);
  return out;
}

// Squared L2 between a float query and dequantized codes; degenerate
// dimensions contribute nothing.
inline float asymmetric_distance(std::span<const float> query, std::span<const std::uint8_t> codes,
                                 const QuantizerParams& p) {
  if (query.size() != p.dim() || codes.size() != p.dim()) throw Error("asymmetric_distance: dimension mismatch");
  float s = 0.0f;
  for (std::size_t j = 0; j < query.size(); ++j) {
    if (p.degenerate(j)) continue;
    const float d = query[j] - dequantize_value(codes[j], p.lo[j], p.hi[j]);
    s += d * d;
  }
  return s;
}

// Per-query table of (q_j - level)^2; summing it in dimension order gives
// bit-identical results to asymmetric_distance.
class AsymmetricTable {
 public:
  AsymmetricTable(std::span<const float> query, const QuantizerParams& p) : dim_(p.dim()), lut_(p.dim() * kCodeLevels) {
    if (query.size() != p.dim()) throw Error("asymmetric_distance: dimension mismatch");
    for (std::size_t j = 0; j < dim_; ++j)
      for (std::uint32_t c = 0; c < kCodeLevels; ++c) {
        if (p.degenerate(j)) continue;
        const float d = query[j] - dequantize_value(static_cast<std::uint8_t>(c), p.lo[j], p.hi[j]);
        lut_[j * kCodeLevels + c] = d * d;
      }
  }

  float distance(std::span<const std::uint8_t> codes) const {
    float s = 0.0f;
    for (std::size_t j = 0; j < dim_; ++j) s += lut_[j * kCodeLevels + codes[j]];
    return s;
  }

 private:
  std::size_t dim_;
  std::vector<float> lut_;
};

}  // namespace hforest
