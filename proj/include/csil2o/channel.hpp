#pragma once

#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "csil2o/checkpoint.hpp"
#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"
#include "csil2o/tensor.hpp"

namespace csil2o {

using cplx = std::complex<double>;

/// Dense column-count-aware complex matrix, row-major.
struct CMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;

  CMatrix() = default;
  CMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

  cplx& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const cplx& at(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  double frob_norm() const {
    double acc = 0.0;
    for (const cplx& v : data) acc += std::norm(v);
    return std::sqrt(acc);
  }
};

inline CMatrix cmatmul(const CMatrix& a, const CMatrix& b) {
  if (a.cols != b.rows) throw dimension_error("cmatmul: inner dims disagree");
  CMatrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const cplx aik = a.at(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += aik * b.at(k, j);
    }
  return c;
}

/// Unitary DFT matrix, F[j,k] = exp(-2*pi*i*j*k/N) / sqrt(N).
inline CMatrix dft_matrix(std::size_t n) {
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const double phase = -2.0 * std::numbers::pi *
                           static_cast<double>(j * k % n) /
                           static_cast<double>(n);
      f.at(j, k) = std::polar(scale, phase);
    }
  return f;
}

inline CMatrix conj_transpose(const CMatrix& a) {
  CMatrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = std::conj(a.at(i, j));
  return t;
}

// ============================================================================
// Synthetic multipath channel generation
// ============================================================================

struct GenConfig {
  std::size_t N_c = 64;   // subcarriers
  std::size_t N_t = 8;    // transmit antennas
  std::size_t N_a = 8;    // retained delay rows
  std::size_t n_paths = 3;
  double delay_spread = 0.08;  // fraction of N_c holding path delays
  double angle_spread = std::numbers::pi / 2;  // radians, angles in +/- spread
  std::uint64_t seed = 1;

  std::size_t h_dim() const { return 2 * N_a * N_t; }

  void validate() const {
    if (N_c == 0 || N_t == 0 || N_a == 0)
      throw contract_error("GenConfig: dimensions must be positive");
    if (N_a > N_c) throw dimension_error("GenConfig: N_a must not exceed N_c");
    if (n_paths < 1) throw contract_error("GenConfig: n_paths must be >= 1");
    if (delay_spread <= 0.0 || delay_spread > 1.0)
      throw contract_error("GenConfig: delay_spread must be in (0, 1]");
    if (angle_spread <= 0.0)
      throw contract_error("GenConfig: angle_spread must be positive");
  }
};

struct ChannelSample {
  CMatrix H;        // N_c x N_t spatial-frequency channel
  Tensor H_trunc;   // 2 x N_a x N_t real/imag planes of the truncated
                    // angular-delay matrix
  std::vector<double> h_vec;  // real plane then imag plane, each row-major
};

/// Flatten the 2 x N_a x N_t truncated planes into the canonical vector
/// layout used by the whole pipeline.
inline std::vector<double> flatten_trunc(const Tensor& h_trunc) {
  return h_trunc.values();
}

inline Tensor unflatten_trunc(const std::vector<double>& h_vec,
                              std::size_t n_a, std::size_t n_t) {
  if (h_vec.size() != 2 * n_a * n_t)
    throw dimension_error("unflatten_trunc: length mismatch");
  return Tensor::from_vector({2, n_a, n_t}, h_vec);
}

/// Angular-delay sparsification and truncation: H' = F_d H F_a with unitary
/// DFT matrices, returned as the real/imag planes of the first N_a rows.
inline Tensor sparsify_truncate(const CMatrix& h, std::size_t n_a) {
  if (n_a > h.rows)
    throw dimension_error("sparsify_truncate: N_a exceeds subcarrier count");
  const CMatrix hp = cmatmul(cmatmul(dft_matrix(h.rows), h), dft_matrix(h.cols));
  Tensor out = Tensor::zeros({2, n_a, h.cols});
  double* re = out.data();
  double* im = out.data() + n_a * h.cols;
  for (std::size_t r = 0; r < n_a; ++r)
    for (std::size_t c = 0; c < h.cols; ++c) {
      re[r * h.cols + c] = hp.at(r, c).real();
      im[r * h.cols + c] = hp.at(r, c).imag();
    }
  return out;
}

/// Full (untruncated) angular-delay transform, for diagnostics.
inline CMatrix angular_delay(const CMatrix& h) {
  return cmatmul(cmatmul(dft_matrix(h.rows), h), dft_matrix(h.cols));
}

namespace detail {

// Circular distance between a delay bin and a fractional path delay.
inline double circ_dist(std::size_t bin, double tau, std::size_t n) {
  double d = std::fabs(static_cast<double>(bin) - tau);
  return std::min(d, static_cast<double>(n) - d);
}

}  // namespace detail

/// Draw one multipath channel. Each path carries a complex Gaussian gain,
/// a fractional delay inside [0, delay_spread*N_c), and an arrival angle
/// inside [-angle_spread, angle_spread). The per-path delay profile is a
/// narrow Gaussian pulse in the delay domain (pulse-shaped, width 0.4 bins),
/// so delay energy stays confined to the low rows while remaining off-grid.
/// The result is normalized to unit Frobenius norm.
inline ChannelSample synthesize(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  constexpr double kDelayPulseWidth = 0.4;  // standard deviation, in bins

  // Build the delay x antenna matrix first, then map back with the inverse
  // row DFT so that sparsify_truncate recovers it exactly.
  CMatrix delay_domain(cfg.N_c, cfg.N_t);
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    const cplx gain(rng.normal() / std::numbers::sqrt2,
                    rng.normal() / std::numbers::sqrt2);
    const double tau =
        rng.uniform(0.0, cfg.delay_spread * static_cast<double>(cfg.N_c));
    const double angle = rng.uniform(-1.0, 1.0) * cfg.angle_spread;
    const double sin_a = std::sin(angle);
    for (std::size_t r = 0; r < cfg.N_c; ++r) {
      const double d = detail::circ_dist(r, tau, cfg.N_c);
      if (d > 6.0 * kDelayPulseWidth) continue;
      const double k = std::exp(-0.5 * (d / kDelayPulseWidth) * (d / kDelayPulseWidth));
      for (std::size_t t = 0; t < cfg.N_t; ++t) {
        const double phase = std::numbers::pi * static_cast<double>(t) * sin_a;
        delay_domain.at(r, t) += gain * k * std::polar(1.0, phase);
      }
    }
  }

  ChannelSample s;
  // H = F_d^H * delay_domain, so F_d * H reproduces the delay profile.
  s.H = cmatmul(conj_transpose(dft_matrix(cfg.N_c)), delay_domain);
  const double norm = s.H.frob_norm();
  if (norm > 0.0)
    for (cplx& v : s.H.data) v /= norm;
  s.H_trunc = sparsify_truncate(s.H, cfg.N_a);
  s.h_vec = flatten_trunc(s.H_trunc);
  return s;
}

// ============================================================================
// Dataset
// ============================================================================

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

struct Dataset {
  std::vector<ChannelSample> samples;
  Split split = Split::train;
  GenConfig config;

  std::size_t size() const { return samples.size(); }

  /// Samples stacked into a count x (2*N_a*N_t) matrix.
  Tensor stacked() const {
    const std::size_t n = config.h_dim();
    std::vector<double> data;
    data.reserve(samples.size() * n);
    for (const ChannelSample& s : samples)
      data.insert(data.end(), s.h_vec.begin(), s.h_vec.end());
    return Tensor::from_vector({samples.size(), n}, std::move(data));
  }
};

/// Generate `count` samples; sample i uses seed base_seed + i, so any
/// subrange is reproducible independently of the rest.
inline Dataset generate_dataset(GenConfig cfg, std::size_t count,
                                Split split = Split::train) {
  cfg.validate();
  Dataset d;
  d.split = split;
  d.config = cfg;
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GenConfig c = cfg;
    c.seed = cfg.seed + i;
    d.samples.push_back(synthesize(c));
  }
  return d;
}

// Dataset file, magic "CLDS":
//   magic[4] | version u32 | N_c u32 | N_t u32 | N_a u32 | n_paths u32 |
//   delay_spread f64 | angle_spread f64 | seed u64 | sample count u64 |
//   per sample: f64 h_vec payload (2*N_a*N_t values). Little-endian.

inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("cannot open for writing: " + path);
  os.write("CLDS", 4);
  detail::write_u32(os, kDatasetVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(d.config.N_c));
  detail::write_u32(os, static_cast<std::uint32_t>(d.config.N_t));
  detail::write_u32(os, static_cast<std::uint32_t>(d.config.N_a));
  detail::write_u32(os, static_cast<std::uint32_t>(d.config.n_paths));
  detail::write_f64(os, d.config.delay_spread);
  detail::write_f64(os, d.config.angle_spread);
  detail::write_u64(os, d.config.seed);
  detail::write_u64(os, d.samples.size());
  const std::size_t n = d.config.h_dim();
  for (const ChannelSample& s : d.samples) {
    if (s.h_vec.size() != n)
      throw dimension_error("save_dataset: sample shape differs from config");
    for (double v : s.h_vec) detail::write_f64(os, v);
  }
  if (!os) throw format_error("write failed: " + path);
}

/// Load a dataset file. Samples carry h_vec and the reshaped truncated
/// planes; the pre-DFT spatial-frequency matrix is not stored.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open: " + path);
  detail::expect_magic(is, "CLDS", "CLDS dataset");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kDatasetVersion)
    throw format_error("unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.config.N_c = detail::read_u32(is, "N_c");
  d.config.N_t = detail::read_u32(is, "N_t");
  d.config.N_a = detail::read_u32(is, "N_a");
  d.config.n_paths = detail::read_u32(is, "n_paths");
  d.config.delay_spread = detail::read_f64(is, "delay_spread");
  d.config.angle_spread = detail::read_f64(is, "angle_spread");
  d.config.seed = detail::read_u64(is, "seed");
  d.config.validate();
  const std::uint64_t count = detail::read_u64(is, "sample count");
  const std::size_t n = d.config.h_dim();
  d.samples.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ChannelSample& s = d.samples[i];
    s.h_vec.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      s.h_vec[j] = detail::read_f64(is, "h_vec payload");
    s.H_trunc = unflatten_trunc(s.h_vec, d.config.N_a, d.config.N_t);
  }
  return d;
}

}  // namespace csil2o
