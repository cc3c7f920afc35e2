#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"

namespace csil2o {
namespace solvers {

// Classic proximal-gradient machinery on plain vectors. Kept free of the
// autodiff tensor path so it can serve as an independent reference for the
// learned decoder.

using Vec = std::vector<double>;

/// Row-major dense matrix for the solver side.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Mat gaussian(std::size_t r, std::size_t c, double stddev,
                      std::uint64_t seed) {
    Mat m(r, c);
    Rng rng(seed);
    for (double& v : m.data) v = rng.normal() * stddev;
    return m;
  }
};

inline Vec matvec(const Mat& w, const Vec& x) {
  if (x.size() != w.cols) throw dimension_error("matvec: length mismatch");
  Vec y(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = 0.0;
    const double* row = w.data.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

inline Vec matvec_t(const Mat& w, const Vec& y) {
  if (y.size() != w.rows) throw dimension_error("matvec_t: length mismatch");
  Vec x(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double yi = y[i];
    const double* row = w.data.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) x[j] += row[j] * yi;
  }
  return x;
}

inline double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

/// Largest eigenvalue of W^T W by power iteration (deterministic all-ones
/// start, 100 iterations or relative movement below tol).
inline double lipschitz(const Mat& w, std::size_t iters = 100,
                        double tol = 1e-10) {
  Vec v(w.cols, 1.0 / std::sqrt(static_cast<double>(w.cols)));
  double lambda = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    Vec u = matvec_t(w, matvec(w, v));
    const double nu = norm2(u);
    if (nu == 0.0) return 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) u[j] /= nu;
    const double prev = lambda;
    lambda = nu;
    v = std::move(u);
    if (it > 0 && std::fabs(lambda - prev) <= tol * std::fabs(lambda)) break;
  }
  return lambda;
}

/// LASSO instance: min_x 0.5 ||s - W x||^2 + lambda ||x||_1 with fixed
/// gradient step alpha.
struct LassoProblem {
  Mat W;
  Vec s;
  double lambda = 0.0;
  double alpha = 0.0;

  static LassoProblem with_safe_step(Mat w, Vec s, double lambda) {
    LassoProblem p;
    const double lip = lipschitz(w);
    if (lip <= 0.0) throw numerical_error("LassoProblem: W has zero spectrum");
    p.W = std::move(w);
    p.s = std::move(s);
    p.lambda = lambda;
    p.alpha = 1.0 / lip;
    return p;
  }

  void validate() const {
    if (s.size() != W.rows) throw dimension_error("LassoProblem: |s| != rows(W)");
    if (lambda < 0.0) throw contract_error("LassoProblem: lambda must be >= 0");
    if (alpha <= 0.0) throw contract_error("LassoProblem: alpha must be > 0");
  }
};

/// sign(x) * max(0, |x| - theta), elementwise. theta scalar or per entry.
inline Vec soft_threshold(const Vec& x, const Vec& theta) {
  if (theta.size() != 1 && theta.size() != x.size())
    throw dimension_error("soft_threshold: theta length mismatch");
  for (double t : theta)
    if (t < 0.0) throw contract_error("soft_threshold: negative theta");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double th = theta[theta.size() == 1 ? 0 : i];
    const double mag = std::fabs(x[i]) - th;
    out[i] = mag > 0.0 ? (x[i] > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

inline Vec soft_threshold(const Vec& x, double theta) {
  return soft_threshold(x, Vec{theta});
}

inline double objective(const LassoProblem& p, const Vec& x) {
  p.validate();
  if (x.size() != p.W.cols) throw dimension_error("objective: |x| != cols(W)");
  const Vec r = matvec(p.W, x);
  double fid = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = p.s[i] - r[i];
    fid += d * d;
  }
  double l1 = 0.0;
  for (double v : x) l1 += std::fabs(v);
  return 0.5 * fid + p.lambda * l1;
}

inline Vec grad_fidelity(const Mat& w, const Vec& s, const Vec& x) {
  Vec r = matvec(w, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= s[i];
  return matvec_t(w, r);
}

/// One ISTA step: soft_threshold(x - alpha W^T (W x - s), alpha lambda).
inline Vec ista_step(const LassoProblem& p, const Vec& x) {
  p.validate();
  if (x.size() != p.W.cols) throw dimension_error("ista_step: |x| != cols(W)");
  const Vec g = grad_fidelity(p.W, p.s, x);
  Vec u(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) u[j] = x[j] - p.alpha * g[j];
  return soft_threshold(u, p.alpha * p.lambda);
}

inline Vec ista(const LassoProblem& p, Vec x, std::size_t iters) {
  for (std::size_t t = 0; t < iters; ++t) x = ista_step(p, x);
  return x;
}

/// High-accuracy reference solution: FISTA with the safe step 1/L from
/// x = 0, run until the max-norm displacement drops below tol.
inline Vec solve_oracle(const LassoProblem& p, double tol,
                        std::size_t max_iters = 1000000) {
  p.validate();
  if (tol <= 0.0) throw contract_error("solve_oracle: tol must be positive");
  const std::size_t n = p.W.cols;
  const double lip = lipschitz(p.W);
  if (lip <= 0.0) throw numerical_error("solve_oracle: W has zero spectrum");
  const double step = 1.0 / lip;

  Vec x(n, 0.0), y(n, 0.0);
  double t = 1.0;
  double disp = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Vec g = grad_fidelity(p.W, p.s, y);
    Vec u(n);
    for (std::size_t j = 0; j < n; ++j) u[j] = y[j] - step * g[j];
    Vec x_next = soft_threshold(u, step * p.lambda);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    disp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x_next[j] - x[j];
      disp = std::max(disp, std::fabs(d));
      y[j] = x_next[j] + (t - 1.0) / t_next * d;
    }
    x = std::move(x_next);
    t = t_next;
    if (disp < tol) return x;
  }
  throw numerical_error("solve_oracle: no convergence after " +
                        std::to_string(max_iters) +
                        " iterations, last displacement " +
                        std::to_string(disp));
}

}  // namespace solvers
}  // namespace csil2o
