#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "hforest/common.hpp"
#include "hforest/dataset.hpp"

namespace hforest {

inline constexpr std::uint32_t kDefaultBitsPerAxis = 8;
inline constexpr std::size_t kDefaultMaxKeyBits = 4096;

// Per-dimension data envelope used for grid mapping and quantization.
struct Bounds {
  std::vector<float> lo;
  std::vector<float> hi;

  std::size_t dim() const { return lo.size(); }

  static Bounds of(const VectorDataset& ds) {
    if (ds.empty()) throw Error("bounds of an empty dataset are undefined");
    Bounds b;
    auto first = ds.row(0);
    b.lo.assign(first.begin(), first.end());
    b.hi = b.lo;
    for (std::size_t i = 1; i < ds.size(); ++i) {
      auto r = ds.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        b.lo[j] = std::min(b.lo[j], r[j]);
        b.hi[j] = std::max(b.hi[j], r[j]);
      }
    }
    return b;
  }

  void validate(std::size_t dim) const {
    if (lo.size() != dim || hi.size() != dim) throw Error("bounds dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j)
      if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || lo[j] > hi[j])
        throw Error("invalid bounds on dimension " + std::to_string(j));
  }

  bool operator==(const Bounds&) const = default;
};

// One Hilbert order: the curve over a 2^m grid with axes taken in axis_perm order.
struct CurveConfig {
  std::uint32_t dim = 0;
  std::uint32_t bits_per_axis = kDefaultBitsPerAxis;
  std::vector<std::uint32_t> axis_perm;
  std::uint64_t seed = 0;

  static CurveConfig identity(std::uint32_t dim, std::uint32_t bits = kDefaultBitsPerAxis) {
    CurveConfig c;
    c.dim = dim;
    c.bits_per_axis = bits;
    c.axis_perm.resize(dim);
    std::iota(c.axis_perm.begin(), c.axis_perm.end(), 0u);
    c.validate();
    return c;
  }

  // Config of the index-th randomized order under global_seed.
  static CurveConfig derived(std::uint32_t dim, std::uint32_t bits, std::uint64_t global_seed,
                             std::uint64_t index) {
    CurveConfig c;
    c.dim = dim;
    c.bits_per_axis = bits;
    c.seed = derive_seed(global_seed, index);
    c.axis_perm = random_permutation(dim, c.seed);
    c.validate();
    return c;
  }

  std::size_t key_bits() const { return std::size_t{dim} * bits_per_axis; }
  std::size_t key_words() const { return (key_bits() + 63) / 64; }
  std::uint32_t max_cell() const {
    return bits_per_axis == 32 ? UINT32_MAX : (std::uint32_t{1} << bits_per_axis) - 1;
  }

  void validate(std::size_t max_key_bits = kDefaultMaxKeyBits) const {
    if (dim == 0) throw Error("curve dimension must be positive");
    if (bits_per_axis == 0 || bits_per_axis > 32) throw Error("bits_per_axis must be in [1, 32]");
    if (axis_perm.size() != dim || !is_permutation_of_range(axis_perm))
      throw Error("axis_perm is not a permutation of [0, dim)");
    if (key_bits() > max_key_bits)
      throw Error("key width " + std::to_string(key_bits()) + " bits exceeds limit " +
                  std::to_string(max_key_bits));
  }

  bool operator==(const CurveConfig&) const = default;
};

struct GridPoint {
  std::vector<std::uint32_t> coords;
  bool operator==(const GridPoint&) const = default;
};

// Unsigned integer of key_bits() bits, stored as big-endian 64-bit words so
// that lexicographic word order is numeric order.
struct HilbertKey {
  std::vector<std::uint64_t> words;

  static HilbertKey from_u64(std::uint64_t v, const CurveConfig& cfg) {
    HilbertKey k;
    k.words.assign(cfg.key_words(), 0);
    k.words.back() = v;
    return k;
  }

  std::uint64_t to_u64() const {
    for (std::size_t i = 0; i + 1 < words.size(); ++i)
      if (words[i]) throw Error("key does not fit in 64 bits");
    return words.empty() ? 0 : words.back();
  }

  friend std::strong_ordering operator<=>(const HilbertKey& a, const HilbertKey& b) {
    return std::lexicographical_compare_three_way(a.words.begin(), a.words.end(), b.words.begin(),
                                                  b.words.end());
  }
  bool operator==(const HilbertKey&) const = default;
};

inline std::strong_ordering compare_words(const std::uint64_t* a, const std::uint64_t* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] != b[i]) return a[i] < b[i] ? std::strong_ordering::less : std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

namespace detail {

// Skilling's in-place transform from axis coordinates to the transposed
// Hilbert index (bit q of X[i] is index bit q*d + d-1-i).
inline void axes_to_transpose(std::span<std::uint32_t> x, std::uint32_t bits) {
  const std::size_t n = x.size();
  const std::uint32_t top = std::uint32_t{1} << (bits - 1);
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    // Branch-free form of: if (x[i] & q) x[0] ^= p; else swap low bits of x[0] and x[i].
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t set = 0u - static_cast<std::uint32_t>((x[i] & q) != 0);
      const std::uint32_t t = (x[0] ^ x[i]) & p & ~set;
      x[0] ^= (p & set) | t;
      x[i] ^= t;
    }
  }
  for (std::size_t i = 1; i < n; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = top; q > 1; q >>= 1)
    if (x[n - 1] & q) t ^= q - 1;
  for (std::size_t i = 0; i < n; ++i) x[i] ^= t;
}

inline void transpose_to_axes(std::span<std::uint32_t> x, std::uint32_t bits) {
  const std::size_t n = x.size();
  const std::uint64_t end = std::uint64_t{2} << (bits - 1);
  std::uint32_t t = x[n - 1] >> 1;
  for (std::size_t i = n - 1; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  for (std::uint64_t q64 = 2; q64 != end; q64 <<= 1) {
    const auto q = static_cast<std::uint32_t>(q64);
    const std::uint32_t p = q - 1;
    for (std::size_t i = n; i-- > 0;) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
}

inline void pack_transpose(std::span<const std::uint32_t> x, std::uint32_t bits, std::uint64_t* out,
                           std::size_t words) {
  std::fill(out, out + words, 0);
  const std::size_t d = x.size();
  std::size_t pos = d * bits;  // index bits remaining, MSB first
  for (std::uint32_t q = bits; q-- > 0;) {
    for (std::size_t i = 0; i < d; ++i) {
      --pos;
      out[words - 1 - pos / 64] |= std::uint64_t{(x[i] >> q) & 1u} << (pos % 64);
    }
  }
}

inline void unpack_transpose(const std::uint64_t* in, std::size_t words, std::uint32_t bits,
                             std::span<std::uint32_t> x) {
  const std::size_t d = x.size();
  std::fill(x.begin(), x.end(), 0);
  std::size_t pos = d * bits;
  for (std::uint32_t q = bits; q-- > 0;) {
    for (std::size_t i = 0; i < d; ++i) {
      --pos;
      if ((in[words - 1 - pos / 64] >> (pos % 64)) & 1u) x[i] |= std::uint32_t{1} << q;
    }
  }
}

inline std::uint32_t to_cell(float v, float lo, float hi, std::uint32_t max_cell) {
  if (!(hi > lo)) return 0;
  const double t = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo) * max_cell;
  if (!(t > 0.0)) return 0;
  const double r = std::floor(t + 0.5);
  return r >= max_cell ? max_cell : static_cast<std::uint32_t>(r);
}

}  // namespace detail

inline GridPoint to_grid(std::span<const float> v, const Bounds& bounds, const CurveConfig& cfg) {
  if (v.size() != cfg.dim || bounds.dim() != cfg.dim) throw Error("to_grid: dimension mismatch");
  GridPoint g;
  g.coords.resize(cfg.dim);
  const auto mc = cfg.max_cell();
  for (std::uint32_t j = 0; j < cfg.dim; ++j) {
    const auto src = cfg.axis_perm[j];
    g.coords[j] = detail::to_cell(v[src], bounds.lo[src], bounds.hi[src], mc);
  }
  return g;
}

inline HilbertKey hilbert_encode(const GridPoint& p, const CurveConfig& cfg) {
  if (p.coords.size() != cfg.dim) throw Error("hilbert_encode: dimension mismatch");
  for (auto c : p.coords)
    if (c > cfg.max_cell()) throw Error("hilbert_encode: coordinate exceeds bits_per_axis");
  std::vector<std::uint32_t> x = p.coords;
  detail::axes_to_transpose(x, cfg.bits_per_axis);
  HilbertKey k;
  k.words.resize(cfg.key_words());
  detail::pack_transpose(x, cfg.bits_per_axis, k.words.data(), k.words.size());
  return k;
}

inline GridPoint hilbert_decode(const HilbertKey& k, const CurveConfig& cfg) {
  const std::size_t words = cfg.key_words();
  if (k.words.size() != words) throw Error("hilbert_decode: key width mismatch");
  const std::size_t spare = words * 64 - cfg.key_bits();
  if (spare && (k.words[0] >> (64 - spare)) != 0) throw Error("hilbert_decode: key out of range");
  GridPoint g;
  g.coords.resize(cfg.dim);
  detail::unpack_transpose(k.words.data(), words, cfg.bits_per_axis, g.coords);
  detail::transpose_to_axes(g.coords, cfg.bits_per_axis);
  return g;
}

// Maps float vectors straight to packed keys with reusable scratch.
class KeyEncoder {
 public:
  KeyEncoder(const Bounds& bounds, const CurveConfig& cfg) : bounds_(&bounds), cfg_(&cfg), scratch_(cfg.dim) {
    if (bounds.dim() != cfg.dim) throw Error("bounds/curve dimension mismatch");
  }

  std::size_t words() const { return cfg_->key_words(); }

  void encode(std::span<const float> v, std::uint64_t* out) {
    if (v.size() != cfg_->dim) throw Error("dimension mismatch: got " + std::to_string(v.size()) +
                                           ", expected " + std::to_string(cfg_->dim));
    const auto mc = cfg_->max_cell();
    for (std::uint32_t j = 0; j < cfg_->dim; ++j) {
      const auto src = cfg_->axis_perm[j];
      scratch_[j] = detail::to_cell(v[src], bounds_->lo[src], bounds_->hi[src], mc);
    }
    detail::axes_to_transpose(scratch_, cfg_->bits_per_axis);
    detail::pack_transpose(scratch_, cfg_->bits_per_axis, out, words());
  }

  HilbertKey encode(std::span<const float> v) {
    HilbertKey k;
    k.words.resize(words());
    encode(v, k.words.data());
    return k;
  }

 private:
  const Bounds* bounds_;
  const CurveConfig* cfg_;
  std::vector<std::uint32_t> scratch_;
};

inline std::strong_ordering hilbert_compare(std::span<const float> a, std::span<const float> b,
                                            const Bounds& bounds, const CurveConfig& cfg) {
  if (a.size() != cfg.dim || b.size() != cfg.dim) throw Error("hilbert_compare: dimension mismatch");
  KeyEncoder enc(bounds, cfg);
  return enc.encode(a) <=> enc.encode(b);
}

// Keys of every dataset row under one curve, row-major with key_words() stride.
struct KeyTable {
  std::size_t words = 0;
  std::vector<std::uint64_t> data;

  const std::uint64_t* key(std::size_t i) const { return data.data() + i * words; }
  std::size_t size() const { return words ? data.size() / words : 0; }
};

inline KeyTable encode_all(const VectorDataset& ds, const Bounds& bounds, const CurveConfig& cfg,
                           KeyTable table = {}) {
  table.words = cfg.key_words();
  table.data.resize(ds.size() * table.words);
  const std::size_t chunk = 256;
  const std::size_t chunks = (ds.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    KeyEncoder enc(bounds, cfg);
    const std::size_t end = std::min(ds.size(), (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) enc.encode(ds.row(i), table.data.data() + i * table.words);
  });
  return table;
}

struct HilbertOrder {
  std::vector<id_t> perm;     // position -> id
  std::vector<id_t> inverse;  // id -> position

  std::size_t size() const { return perm.size(); }

  static HilbertOrder from_perm(std::vector<id_t> perm) {
    HilbertOrder o;
    o.perm = std::move(perm);
    o.inverse.resize(o.perm.size());
    for (std::size_t p = 0; p < o.perm.size(); ++p) o.inverse[o.perm[p]] = static_cast<id_t>(p);
    return o;
  }

  bool operator==(const HilbertOrder&) const = default;
};

// Sorts ids into `perm` by (key, id).
inline void sort_by_keys(const KeyTable& keys, std::vector<id_t>& perm) {
  perm.resize(keys.size());
  std::iota(perm.begin(), perm.end(), id_t{0});
  const std::size_t w = keys.words;
  std::sort(perm.begin(), perm.end(), [&](id_t a, id_t b) {
    const auto c = compare_words(keys.key(a), keys.key(b), w);
    return c != 0 ? c < 0 : a < b;
  });
}

inline HilbertOrder hilbert_sort(const VectorDataset& ds, const Bounds& bounds, const CurveConfig& cfg) {
  if (ds.empty()) return {};
  if (ds.dim() != cfg.dim) throw Error("hilbert_sort: dimension mismatch");
  const auto keys = encode_all(ds, bounds, cfg);
  std::vector<id_t> perm;
  sort_by_keys(keys, perm);
  return HilbertOrder::from_perm(std::move(perm));
}

inline HilbertOrder hilbert_sort(const VectorDataset& ds, const CurveConfig& cfg) {
  if (ds.empty()) return {};
  return hilbert_sort(ds, Bounds::of(ds), cfg);
}

// Number of ordered points strictly before q in Hilbert order (first-of-equals).
inline std::size_t position_search(const HilbertOrder& order, const VectorDataset& ds, std::span<const float> q,
                                   const Bounds& bounds, const CurveConfig& cfg) {
  if (q.size() != cfg.dim || ds.dim() != cfg.dim) throw Error("position_search: dimension mismatch");
  KeyEncoder enc(bounds, cfg);
  const auto qkey = enc.encode(q);
  std::vector<std::uint64_t> scratch(enc.words());
  std::size_t lo = 0, hi = order.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    enc.encode(ds.row(order.perm[mid]), scratch.data());
    if (compare_words(scratch.data(), qkey.words.data(), scratch.size()) < 0)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace hforest
