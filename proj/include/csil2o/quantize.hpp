#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "csil2o/checkpoint.hpp"
#include "csil2o/errors.hpp"

namespace csil2o {

/// Non-uniform scalar quantizer: 2^B reconstruction levels and the
/// midpoint decision thresholds between them, both ascending.
struct QuantizerCodebook {
  int bits = 0;
  std::vector<double> levels;
  std::vector<double> thresholds;

  std::size_t level_count() const { return levels.size(); }

  /// Nearest-level index; exact midpoints resolve to the lower index.
  std::uint32_t index_of(double v) const {
    std::size_t idx = 0;
    while (idx < thresholds.size() && v > thresholds[idx]) ++idx;
    return static_cast<std::uint32_t>(idx);
  }
};

struct LloydFitResult {
  QuantizerCodebook codebook;
  bool converged = false;
  std::size_t iterations = 0;
  double distortion = 0.0;  // mean squared error on the training samples
};

namespace detail {

inline double cell_distortion(const std::vector<double>& sorted,
                              const QuantizerCodebook& cb) {
  double acc = 0.0;
  for (double v : sorted) {
    const double d = v - cb.levels[cb.index_of(v)];
    acc += d * d;
  }
  return sorted.empty() ? 0.0 : acc / static_cast<double>(sorted.size());
}

}  // namespace detail

/// Lloyd-Max codebook design: alternate nearest-level assignment and
/// centroid updates until the largest level movement drops below tol.
/// Levels seed from sample quantiles; a level whose cell empties is
/// re-seeded at the midpoint of the currently largest cell.
inline LloydFitResult fit_lloyd_max(const std::vector<double>& samples,
                                    int bits, std::size_t max_iter = 500,
                                    double tol = 1e-10) {
  if (samples.empty()) throw contract_error("fit_lloyd_max: empty samples");
  if (bits < 1 || bits > 8)
    throw contract_error("fit_lloyd_max: bits must be in 1..8");
  const std::size_t m = std::size_t{1} << bits;

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());

  QuantizerCodebook cb;
  cb.bits = bits;
  cb.levels.resize(m);
  cb.thresholds.assign(m - 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
    const std::size_t pos = std::min(
        sorted.size() - 1,
        static_cast<std::size_t>(q * static_cast<double>(sorted.size())));
    cb.levels[k] = sorted[pos];
  }

  std::vector<double> cell_sum(m), best_levels;
  std::vector<std::size_t> cell_count(m), cell_begin(m + 1);
  double best_distortion = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t it = 0;

  for (; it < max_iter; ++it) {
    for (std::size_t k = 0; k + 1 < m; ++k)
      cb.thresholds[k] = 0.5 * (cb.levels[k] + cb.levels[k + 1]);

    // Assignment via the sorted samples: cell k is (thresholds[k-1], thresholds[k]].
    std::fill(cell_sum.begin(), cell_sum.end(), 0.0);
    std::fill(cell_count.begin(), cell_count.end(), std::size_t{0});
    cell_begin[0] = 0;
    for (std::size_t k = 0; k + 1 < m; ++k)
      cell_begin[k + 1] =
          std::upper_bound(sorted.begin(), sorted.end(), cb.thresholds[k]) -
          sorted.begin();
    cell_begin[m] = sorted.size();
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = cell_begin[k]; i < cell_begin[k + 1]; ++i)
        cell_sum[k] += sorted[i];
      cell_count[k] = cell_begin[k + 1] - cell_begin[k];
    }

    double movement = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      double next;
      if (cell_count[k] > 0) {
        next = cell_sum[k] / static_cast<double>(cell_count[k]);
      } else {
        // Empty cell: re-seed at the midpoint of the largest cell.
        std::size_t big = 0;
        for (std::size_t j = 1; j < m; ++j)
          if (cell_count[j] > cell_count[big]) big = j;
        const std::size_t mid = cell_begin[big] + cell_count[big] / 2;
        next = sorted[std::min(mid, sorted.size() - 1)];
      }
      movement = std::max(movement, std::fabs(next - cb.levels[k]));
      cb.levels[k] = next;
    }
    std::sort(cb.levels.begin(), cb.levels.end());

    const double dist = detail::cell_distortion(sorted, cb);
    if (dist < best_distortion) {
      best_distortion = dist;
      best_levels = cb.levels;
    }
    if (movement < tol) {
      converged = true;
      ++it;
      break;
    }
  }

  if (!best_levels.empty()) cb.levels = best_levels;
  for (std::size_t k = 0; k + 1 < m; ++k)
    cb.thresholds[k] = 0.5 * (cb.levels[k] + cb.levels[k + 1]);

  LloydFitResult result;
  result.codebook = std::move(cb);
  result.converged = converged;
  result.iterations = it;
  result.distortion = best_distortion;
  return result;
}

// ============================================================================
// Codeword quantization and bit packing
// ============================================================================

struct QuantizeResult {
  std::vector<std::uint32_t> indices;
  std::vector<std::uint8_t> bits;  // big-endian packed, B bits per index
  std::vector<double> dequantized;
};

inline std::vector<std::uint8_t> pack_indices(
    const std::vector<std::uint32_t>& indices, int bits) {
  std::vector<std::uint8_t> out((indices.size() * bits + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (std::uint32_t idx : indices) {
    for (int b = bits - 1; b >= 0; --b) {
      if ((idx >> b) & 1u) out[bitpos / 8] |= std::uint8_t(0x80u >> (bitpos % 8));
      ++bitpos;
    }
  }
  return out;
}

inline std::vector<std::uint32_t> unpack_indices(
    const std::vector<std::uint8_t>& packed, std::size_t count, int bits) {
  if (packed.size() * 8 < count * static_cast<std::size_t>(bits))
    throw format_error("unpack_indices: payload too short");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bitpos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b) {
      v = (v << 1) |
          ((packed[bitpos / 8] >> (7 - bitpos % 8)) & 1u);
      ++bitpos;
    }
    out[i] = v;
  }
  return out;
}

/// Map each codeword entry to its nearest level and pack the indices.
inline QuantizeResult quantize(const QuantizerCodebook& cb,
                               const std::vector<double>& codeword) {
  if (cb.levels.empty()) throw contract_error("quantize: codebook not fitted");
  QuantizeResult r;
  r.indices.reserve(codeword.size());
  r.dequantized.reserve(codeword.size());
  for (double v : codeword) {
    const std::uint32_t idx = cb.index_of(v);
    r.indices.push_back(idx);
    r.dequantized.push_back(cb.levels[idx]);
  }
  r.bits = pack_indices(r.indices, cb.bits);
  return r;
}

inline std::vector<double> dequantize(const QuantizerCodebook& cb,
                                      const std::vector<std::uint32_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::uint32_t i : idx) {
    if (i >= cb.levels.size()) throw format_error("dequantize: index out of range");
    out.push_back(cb.levels[i]);
  }
  return out;
}

/// Total feedback payload for an M-entry codeword at B bits per entry.
inline std::uint64_t feedback_bits(std::size_t m, int bits) {
  if (m == 0 || bits <= 0)
    throw contract_error("feedback_bits: positive inputs required");
  return static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(bits);
}

// ============================================================================
// File formats
// ============================================================================

// Bitstream file, magic "CLBQ": magic[4] | B u8 | M u32 | packed payload.
inline void save_bitstream(const std::string& path, int bits, std::size_t m,
                           const std::vector<std::uint8_t>& payload) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("cannot open for writing: " + path);
  os.write("CLBQ", 4);
  const char b = static_cast<char>(bits);
  os.put(b);
  detail::write_u32(os, static_cast<std::uint32_t>(m));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size()));
  if (!os) throw format_error("write failed: " + path);
}

struct Bitstream {
  int bits = 0;
  std::size_t m = 0;
  std::vector<std::uint8_t> payload;
};

inline Bitstream load_bitstream(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open: " + path);
  detail::expect_magic(is, "CLBQ", "CLBQ bitstream");
  Bitstream bs;
  int c = is.get();
  if (c == EOF) throw format_error("truncated file while reading bits");
  bs.bits = c;
  bs.m = detail::read_u32(is, "codeword length");
  const std::size_t bytes = (bs.m * static_cast<std::size_t>(bs.bits) + 7) / 8;
  bs.payload.resize(bytes);
  if (!is.read(reinterpret_cast<char*>(bs.payload.data()),
               static_cast<std::streamsize>(bytes)))
    throw format_error("truncated bitstream payload");
  return bs;
}

// Codebook file, magic "CLCB": magic[4] | B u8 | levels f64[2^B] |
// thresholds f64[2^B - 1].
inline void save_codebook(const std::string& path,
                          const QuantizerCodebook& cb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("cannot open for writing: " + path);
  os.write("CLCB", 4);
  os.put(static_cast<char>(cb.bits));
  for (double v : cb.levels) detail::write_f64(os, v);
  for (double v : cb.thresholds) detail::write_f64(os, v);
  if (!os) throw format_error("write failed: " + path);
}

inline QuantizerCodebook load_codebook(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open: " + path);
  detail::expect_magic(is, "CLCB", "CLCB codebook");
  QuantizerCodebook cb;
  int c = is.get();
  if (c == EOF || c < 1 || c > 8)
    throw format_error("codebook bit depth out of range");
  cb.bits = c;
  const std::size_t m = std::size_t{1} << cb.bits;
  cb.levels.resize(m);
  cb.thresholds.resize(m - 1);
  for (double& v : cb.levels) v = detail::read_f64(is, "levels");
  for (double& v : cb.thresholds) v = detail::read_f64(is, "thresholds");
  return cb;
}

}  // namespace csil2o
