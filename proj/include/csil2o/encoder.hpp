#pragma once

#include <cstdint>
#include <cstddef>

#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"
#include "csil2o/tensor.hpp"

namespace csil2o {

/// Bias-free linear projection compressing a channel vector of length
/// 2*N_a*N_t into an M-dimensional codeword. W is the only trainable
/// state; there is no activation.
struct LinearEncoder {
  Tensor W;  // M x n, requires_grad when trainable
  std::size_t M = 0;
  std::size_t n = 0;

  static LinearEncoder init_kaiming(std::size_t m, std::size_t n,
                                    std::uint64_t seed, bool trainable = true) {
    if (m == 0 || n == 0)
      throw contract_error("LinearEncoder: M and n must be positive");
    if (m > n)
      throw contract_error("LinearEncoder: M must not exceed 2*N_a*N_t");
    LinearEncoder e;
    e.M = m;
    e.n = n;
    Rng rng(seed);
    e.W = Tensor::randn({m, n}, rng, std::sqrt(2.0 / static_cast<double>(n)),
                        trainable);
    return e;
  }

  double compression_ratio() const {
    return static_cast<double>(M) / static_cast<double>(n);
  }

  /// s = W h. Accepts one vector (shape {n} or {1,n}) or a batch (B x n);
  /// differentiable in both W and the input.
  Tensor encode(const Tensor& h_vec) const {
    Tensor h = h_vec;
    if (h.shape().size() == 1) h = reshape(h, {1, h.size()});
    if (h.shape().size() != 2 || h.cols() != n)
      throw dimension_error("encode: input length does not match encoder");
    return matmul(h, transpose(W));
  }

  /// One multiply per weight, the convention under which FLOPs and the
  /// trainable parameter count coincide for a bias-free linear map.
  std::uint64_t flops() const {
    return static_cast<std::uint64_t>(M) * static_cast<std::uint64_t>(n);
  }

  std::uint64_t param_count() const {
    return static_cast<std::uint64_t>(M) * static_cast<std::uint64_t>(n);
  }
};

}  // namespace csil2o
