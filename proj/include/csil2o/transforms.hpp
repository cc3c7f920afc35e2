#pragma once

#include <cstdint>
#include <vector>

#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"
#include "csil2o/tensor.hpp"

namespace csil2o {

/// Fully-connected layer y = x W^T + b with x given as rows.
struct Linear {
  Tensor W;  // out x in
  Tensor b;  // out

  static Linear init_kaiming(std::size_t in, std::size_t out, Rng& rng,
                             bool trainable = true) {
    Linear l;
    l.W = Tensor::randn({out, in}, rng,
                        std::sqrt(2.0 / static_cast<double>(in)), trainable);
    l.b = Tensor::zeros({out}, trainable);
    return l;
  }

  std::size_t in_dim() const { return W.shape()[1]; }
  std::size_t out_dim() const { return W.shape()[0]; }

  Tensor apply(const Tensor& x) const {
    return add(matmul(x, transpose(W)), broadcast_rows(b, x.rows()));
  }

  std::uint64_t flops() const {
    return static_cast<std::uint64_t>(in_dim()) * out_dim();
  }
  std::uint64_t param_count() const { return W.size() + b.size(); }
};

/// Learnable angular-domain sparse transform. f_t maps one channel row
/// (real/imag concatenated, length 2*N_t) through a 3-layer MLP to an
/// N_i-dimensional code and keeps only the G largest-magnitude entries;
/// f_i mirrors the layer widths back to 2*N_t. The same weights apply to
/// every row. An identity instance bypasses both MLPs.
struct SparseTransform {
  Linear ft[3];
  Linear fi[3];
  std::size_t n_t = 0;
  std::size_t n_code = 0;  // N_i
  std::size_t g = 0;
  bool is_identity = false;

  static SparseTransform create(std::size_t n_t, std::size_t w1,
                                std::size_t w2, std::size_t n_code,
                                std::size_t g, std::uint64_t seed,
                                bool trainable = true) {
    if (g < 1 || g > n_code)
      throw contract_error("SparseTransform: need 1 <= G <= N_i");
    SparseTransform t;
    t.n_t = n_t;
    t.n_code = n_code;
    t.g = g;
    Rng rng(seed);
    const std::size_t in = 2 * n_t;
    t.ft[0] = Linear::init_kaiming(in, w1, rng, trainable);
    t.ft[1] = Linear::init_kaiming(w1, w2, rng, trainable);
    t.ft[2] = Linear::init_kaiming(w2, n_code, rng, trainable);
    t.fi[0] = Linear::init_kaiming(n_code, w2, rng, trainable);
    t.fi[1] = Linear::init_kaiming(w2, w1, rng, trainable);
    t.fi[2] = Linear::init_kaiming(w1, in, rng, trainable);
    return t;
  }

  static SparseTransform identity(std::size_t n_t) {
    SparseTransform t;
    t.n_t = n_t;
    t.n_code = 2 * n_t;
    t.g = 2 * n_t;
    t.is_identity = true;
    return t;
  }

  std::size_t row_dim() const { return 2 * n_t; }

  /// rows: K x 2*N_t -> K x N_i with at most G nonzeros per row.
  Tensor apply_ft(const Tensor& rows) const {
    if (rows.shape().size() != 2 || rows.cols() != row_dim())
      throw dimension_error("apply_ft: row length does not match transform");
    if (is_identity) return rows;
    Tensor h = max0(ft[0].apply(rows));
    h = max0(ft[1].apply(h));
    h = ft[2].apply(h);
    if (g == n_code) return h;
    return topg_mask(h, g);
  }

  /// code: K x N_i -> K x 2*N_t.
  Tensor apply_fi(const Tensor& code) const {
    if (code.shape().size() != 2 || code.cols() != n_code)
      throw dimension_error("apply_fi: code length does not match transform");
    if (is_identity) return code;
    Tensor h = max0(fi[0].apply(code));
    h = max0(fi[1].apply(h));
    return fi[2].apply(h);
  }

  std::vector<Tensor> params() {
    if (is_identity) return {};
    std::vector<Tensor> out;
    for (int i = 0; i < 3; ++i) {
      out.push_back(ft[i].W);
      out.push_back(ft[i].b);
    }
    for (int i = 0; i < 3; ++i) {
      out.push_back(fi[i].W);
      out.push_back(fi[i].b);
    }
    return out;
  }

  /// One multiply per weight for one full application over N_a rows.
  std::uint64_t ft_flops(std::size_t n_a) const {
    if (is_identity) return 0;
    return n_a * (ft[0].flops() + ft[1].flops() + ft[2].flops());
  }
  std::uint64_t fi_flops(std::size_t n_a) const {
    if (is_identity) return 0;
    return n_a * (fi[0].flops() + fi[1].flops() + fi[2].flops());
  }
  std::uint64_t param_count() const {
    if (is_identity) return 0;
    std::uint64_t total = 0;
    for (int i = 0; i < 3; ++i)
      total += ft[i].param_count() + fi[i].param_count();
    return total;
  }
};

/// Column permutation taking the canonical flattening [real plane; imag
/// plane] of a sample to row-major per-row blocks [Re(r,:), Im(r,:)].
inline std::vector<std::size_t> row_layout_permutation(std::size_t n_a,
                                                       std::size_t n_t) {
  std::vector<std::size_t> perm(2 * n_a * n_t);
  for (std::size_t r = 0; r < n_a; ++r)
    for (std::size_t q = 0; q < 2 * n_t; ++q)
      perm[r * 2 * n_t + q] =
          q < n_t ? r * n_t + q : n_a * n_t + r * n_t + (q - n_t);
  return perm;
}

inline std::vector<std::size_t> invert_permutation(
    const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

/// B x (2*N_a*N_t) channel batch -> (B*N_a) x (2*N_t) row batch.
inline Tensor to_row_batch(const Tensor& h, std::size_t n_a, std::size_t n_t) {
  if (h.shape().size() != 2 || h.cols() != 2 * n_a * n_t)
    throw dimension_error("to_row_batch: shape mismatch");
  Tensor p = permute_cols(h, row_layout_permutation(n_a, n_t));
  return reshape(p, {h.rows() * n_a, 2 * n_t});
}

/// Inverse of to_row_batch.
inline Tensor from_row_batch(const Tensor& rows, std::size_t n_a,
                             std::size_t n_t) {
  if (rows.shape().size() != 2 || rows.cols() != 2 * n_t ||
      rows.rows() % n_a != 0)
    throw dimension_error("from_row_batch: shape mismatch");
  const std::size_t b = rows.rows() / n_a;
  Tensor m = reshape(rows, {b, 2 * n_a * n_t});
  return permute_cols(m, invert_permutation(row_layout_permutation(n_a, n_t)));
}

/// Auxiliary reconstruction term: sum over rows of ||row - f_i(f_t(row))||^2
/// for one truncated channel (2 x N_a x N_t) or a batch given row-wise.
inline Tensor transform_loss(const SparseTransform& t, const Tensor& h_trunc) {
  Tensor rows;
  if (h_trunc.shape().size() == 3 && h_trunc.shape()[0] == 2) {
    const std::size_t n_a = h_trunc.shape()[1];
    const std::size_t n_t = h_trunc.shape()[2];
    Tensor flat = reshape(h_trunc, {1, 2 * n_a * n_t});
    rows = to_row_batch(flat, n_a, n_t);
  } else if (h_trunc.shape().size() == 2 && h_trunc.cols() == 2 * t.n_t) {
    rows = h_trunc;
  } else {
    throw dimension_error("transform_loss: unsupported input shape");
  }
  Tensor rec = t.apply_fi(t.apply_ft(rows));
  return sum_squares(sub(rows, rec));
}

}  // namespace csil2o
