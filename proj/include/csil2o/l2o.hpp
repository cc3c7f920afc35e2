#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"
#include "csil2o/solvers.hpp"
#include "csil2o/tensor.hpp"
#include "csil2o/transforms.hpp"

namespace csil2o {

// ============================================================================
// Fused LSTM cell
// ============================================================================

namespace detail {

/// One LSTM cell applied to a batch of rows, fused into a single graph node.
/// Gate order is [input, forget, cell, output]. Returns [h' | c'] as a
/// K x 2h tensor; slice the halves apart. The fused form exists because the
/// unrolled decoder evaluates this at every coordinate of every iteration,
/// and a composite-op tape for it would dominate both memory and time.
inline Tensor lstm_cell(const Tensor& z, const Tensor& hprev,
                        const Tensor& cprev, const Tensor& wih,
                        const Tensor& whh, const Tensor& bih,
                        const Tensor& bhh) {
  const std::size_t k_rows = z.rows();
  const std::size_t in = z.cols();
  const std::size_t h = hprev.cols();
  if (wih.shape() != Shape{4 * h, in} || whh.shape() != Shape{4 * h, h} ||
      bih.size() != 4 * h || bhh.size() != 4 * h ||
      hprev.shape() != Shape{k_rows, h} || cprev.shape() != Shape{k_rows, h})
    throw dimension_error("lstm_cell: inconsistent shapes");

  auto zi = z.impl_ptr();
  auto hi = hprev.impl_ptr();
  auto ci = cprev.impl_ptr();
  auto wihi = wih.impl_ptr();
  auto whhi = whh.impl_ptr();
  auto bihi = bih.impl_ptr();
  auto bhhi = bhh.impl_ptr();

  // Saved activations for the backward pass: i,f,g,o packed per row, then
  // tanh(c') per row.
  auto acts = std::make_shared<std::vector<double>>(k_rows * 4 * h);
  auto tcs = std::make_shared<std::vector<double>>(k_rows * h);

  Tensor out = make_op_result(
      {k_rows, 2 * h}, {&z, &hprev, &cprev, &wih, &whh, &bih, &bhh},
      [zi, hi, ci, wihi, whhi, bihi, bhhi, acts, tcs, k_rows, in,
       h](detail::TensorImpl& self) {
        const bool need_z = zi->requires_grad;
        const bool need_h = hi->requires_grad;
        const bool need_c = ci->requires_grad;
        const bool need_wih = wihi->requires_grad;
        const bool need_whh = whhi->requires_grad;
        const bool need_bih = bihi->requires_grad;
        const bool need_bhh = bhhi->requires_grad;
        if (need_z) zi->ensure_grad();
        if (need_h) hi->ensure_grad();
        if (need_c) ci->ensure_grad();
        if (need_wih) wihi->ensure_grad();
        if (need_whh) whhi->ensure_grad();
        if (need_bih) bihi->ensure_grad();
        if (need_bhh) bhhi->ensure_grad();

        std::vector<double> dgates(4 * h);
        for (std::size_t r = 0; r < k_rows; ++r) {
          const double* a = acts->data() + r * 4 * h;
          const double* tc = tcs->data() + r * h;
          const double* go = self.grad.data() + r * 2 * h;
          const double* cprev_r = ci->data.data() + r * h;
          for (std::size_t kk = 0; kk < h; ++kk) {
            const double ig = a[kk];
            const double fg = a[h + kk];
            const double gg = a[2 * h + kk];
            const double og = a[3 * h + kk];
            const double dh = go[kk];
            double dc = go[h + kk] + dh * og * (1.0 - tc[kk] * tc[kk]);
            dgates[kk] = dc * gg * ig * (1.0 - ig);
            dgates[h + kk] = dc * cprev_r[kk] * fg * (1.0 - fg);
            dgates[2 * h + kk] = dc * ig * (1.0 - gg * gg);
            dgates[3 * h + kk] = dh * tc[kk] * og * (1.0 - og);
            if (need_c) ci->grad[r * h + kk] += dc * fg;
          }
          if (need_z) {
            double* dz = zi->grad.data() + r * in;
            for (std::size_t j = 0; j < 4 * h; ++j) {
              const double dg = dgates[j];
              const double* wr = wihi->data.data() + j * in;
              for (std::size_t q = 0; q < in; ++q) dz[q] += dg * wr[q];
            }
          }
          if (need_h) {
            double* dhp = hi->grad.data() + r * h;
            for (std::size_t j = 0; j < 4 * h; ++j) {
              const double dg = dgates[j];
              const double* wr = whhi->data.data() + j * h;
              for (std::size_t q = 0; q < h; ++q) dhp[q] += dg * wr[q];
            }
          }
          if (need_wih) {
            const double* zr = zi->data.data() + r * in;
            for (std::size_t j = 0; j < 4 * h; ++j) {
              const double dg = dgates[j];
              double* wr = wihi->grad.data() + j * in;
              for (std::size_t q = 0; q < in; ++q) wr[q] += dg * zr[q];
            }
          }
          if (need_whh) {
            const double* hr = hi->data.data() + r * h;
            for (std::size_t j = 0; j < 4 * h; ++j) {
              const double dg = dgates[j];
              double* wr = whhi->grad.data() + j * h;
              for (std::size_t q = 0; q < h; ++q) wr[q] += dg * hr[q];
            }
          }
          for (std::size_t j = 0; j < 4 * h; ++j) {
            if (need_bih) bihi->grad[j] += dgates[j];
            if (need_bhh) bhhi->grad[j] += dgates[j];
          }
        }
      });

  std::vector<double> lin(4 * h);
  for (std::size_t r = 0; r < k_rows; ++r) {
    const double* zr = z.data() + r * in;
    const double* hr = hprev.data() + r * h;
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double acc = bih.data()[j] + bhh.data()[j];
      const double* wi = wih.data() + j * in;
      for (std::size_t q = 0; q < in; ++q) acc += wi[q] * zr[q];
      const double* wh = whh.data() + j * h;
      for (std::size_t q = 0; q < h; ++q) acc += wh[q] * hr[q];
      lin[j] = acc;
    }
    double* a = acts->data() + r * 4 * h;
    double* tc = tcs->data() + r * h;
    double* orow = out.data() + r * 2 * h;
    const double* cprev_r = cprev.data() + r * h;
    for (std::size_t kk = 0; kk < h; ++kk) {
      const double ig = 1.0 / (1.0 + std::exp(-lin[kk]));
      const double fg = 1.0 / (1.0 + std::exp(-lin[h + kk]));
      const double gg = std::tanh(lin[2 * h + kk]);
      const double og = 1.0 / (1.0 + std::exp(-lin[3 * h + kk]));
      const double c_new = fg * cprev_r[kk] + ig * gg;
      const double tcv = std::tanh(c_new);
      a[kk] = ig;
      a[h + kk] = fg;
      a[2 * h + kk] = gg;
      a[3 * h + kk] = og;
      tc[kk] = tcv;
      orow[kk] = og * tcv;
      orow[h + kk] = c_new;
    }
  }
  return out;
}

}  // namespace detail

// ============================================================================
// Parameter network
// ============================================================================

struct LstmLayer {
  Tensor Wih;  // 4h x in
  Tensor Whh;  // 4h x h
  Tensor bih;  // 4h
  Tensor bhh;  // 4h

  static LstmLayer init_kaiming(std::size_t in, std::size_t hidden, Rng& rng,
                                bool trainable) {
    LstmLayer l;
    l.Wih = Tensor::randn({4 * hidden, in}, rng,
                          std::sqrt(2.0 / static_cast<double>(in)), trainable);
    l.Whh = Tensor::randn({4 * hidden, hidden}, rng,
                          std::sqrt(2.0 / static_cast<double>(hidden)),
                          trainable);
    l.bih = Tensor::zeros({4 * hidden}, trainable);
    l.bhh = Tensor::zeros({4 * hidden}, trainable);
    return l;
  }
};

/// Per-iteration optimization parameters, one value per coordinate.
struct StepParams {
  Tensor p;      // preconditioner, in (0, p_max)
  Tensor a;      // accelerator, in (0, a_max)
  Tensor b;      // balance between the x and y branches
  Tensor b1;     // additive bias inside the prox argument
  Tensor b2;     // additive bias on the auxiliary update
  Tensor theta;  // soft threshold, > 0
};

/// Per-coordinate recurrent state of the parameter network: hidden and
/// cell tensors for both LSTM layers, first dimension = coordinate count.
struct LstmState {
  Tensor h0, c0;  // layer 0
  Tensor h1, c1;  // layer 1

  static LstmState gaussian(std::size_t coords, std::size_t hidden,
                            std::uint64_t seed) {
    Rng rng(seed);
    LstmState s;
    s.h0 = Tensor::randn({coords, hidden}, rng);
    s.c0 = Tensor::randn({coords, hidden}, rng);
    s.h1 = Tensor::randn({coords, hidden}, rng);
    s.c1 = Tensor::randn({coords, hidden}, rng);
    return s;
  }
};

inline constexpr double kThetaHeadBiasInit = -4.0;
inline constexpr double kHeadWeightScale = 0.1;

/// Element-wise parameter generator: a two-layer LSTM over (x_i, grad_i)
/// pairs, shared across all coordinates, followed by a linear trunk and six
/// scalar heads. Weight shapes never depend on the problem dimension, so
/// one trained network serves every compression ratio.
struct ParamNet {
  LstmLayer layer0, layer1;
  Linear trunk;
  Linear head_p, head_a, head_b, head_b1, head_b2, head_theta;
  std::size_t hidden = 0;
  double p_max = 1.0;
  double a_max = 1.0;

  static ParamNet create(std::size_t hidden, std::uint64_t seed,
                         bool trainable = true) {
    if (hidden == 0) throw contract_error("ParamNet: hidden size must be > 0");
    ParamNet net;
    net.hidden = hidden;
    Rng rng(seed);
    net.layer0 = LstmLayer::init_kaiming(2, hidden, rng, trainable);
    net.layer1 = LstmLayer::init_kaiming(hidden, hidden, rng, trainable);
    net.trunk = Linear::init_kaiming(hidden, hidden, rng, trainable);
    auto head = [&](double bias_init) {
      Linear l;
      l.W = Tensor::randn({1, hidden}, rng,
                          kHeadWeightScale / std::sqrt(static_cast<double>(hidden)),
                          trainable);
      l.b = Tensor::full({1}, bias_init, trainable);
      return l;
    };
    net.head_p = head(0.0);
    net.head_a = head(0.0);
    net.head_b = head(0.0);
    net.head_b1 = head(0.0);
    net.head_b2 = head(0.0);
    // The theta head starts near zero threshold so early iterates are not
    // annihilated by the prox.
    net.head_theta = head(kThetaHeadBiasInit);
    return net;
  }

  std::vector<Tensor> params() {
    std::vector<Tensor> out;
    for (LstmLayer* l : {&layer0, &layer1}) {
      out.push_back(l->Wih);
      out.push_back(l->Whh);
      out.push_back(l->bih);
      out.push_back(l->bhh);
    }
    for (Linear* l : {&trunk, &head_p, &head_a, &head_b, &head_b1, &head_b2,
                      &head_theta}) {
      out.push_back(l->W);
      out.push_back(l->b);
    }
    return out;
  }

  /// FLOPs for evaluating one coordinate once (one multiply per weight).
  std::uint64_t flops_per_coordinate() const {
    const std::uint64_t h = hidden;
    return 4 * h * (2 + h) + 4 * h * (h + h) + h * h + 6 * h;
  }

  std::uint64_t param_count() const {
    std::uint64_t total = 0;
    for (const LstmLayer* l : {&layer0, &layer1})
      total += l->Wih.size() + l->Whh.size() + l->bih.size() + l->bhh.size();
    for (const Linear* l : {&trunk, &head_p, &head_a, &head_b, &head_b1,
                            &head_b2, &head_theta})
      total += l->W.size() + l->b.size();
    return total;
  }
};

// ============================================================================
// Decoding operations
// ============================================================================

/// Gradient of the fidelity term 0.5||s - W v||^2, i.e. W^T (W v - s).
/// v may be one vector ({n}) with s of shape {M}, or a batch (B x n) with
/// s of shape B x M.
inline Tensor grad_f(const Tensor& w, const Tensor& s, const Tensor& v) {
  const bool single = v.shape().size() == 1;
  Tensor vm = single ? reshape(v, {1, v.size()}) : v;
  Tensor sm = s.shape().size() == 1 ? reshape(s, {1, s.size()}) : s;
  if (vm.cols() != w.cols() || sm.cols() != w.rows() || vm.rows() != sm.rows())
    throw dimension_error("grad_f: inconsistent shapes");
  Tensor residual = sub(matmul(vm, transpose(w)), sm);
  Tensor g = matmul(residual, w);
  return single ? reshape(g, {v.size()}) : g;
}

struct EmitResult {
  StepParams params;
  LstmState state;
};

/// Feed each coordinate's (x_i, grad_i) pair through the shared LSTM with
/// that coordinate's recurrent state and produce the six per-coordinate
/// parameter vectors. x and g are B x n (or {n}); the state spans B*n rows.
inline EmitResult emit_params(const ParamNet& net, const Tensor& x,
                              const Tensor& g, const LstmState& state) {
  Tensor xm = x.shape().size() == 1 ? reshape(x, {1, x.size()}) : x;
  Tensor gm = g.shape().size() == 1 ? reshape(g, {1, g.size()}) : g;
  if (xm.shape() != gm.shape())
    throw dimension_error("emit_params: x and gradient shapes differ");
  const std::size_t b = xm.rows(), n = xm.cols();
  const std::size_t coords = b * n;
  if (state.h0.rows() != coords || state.h0.cols() != net.hidden)
    throw dimension_error("emit_params: state does not match coordinate count");

  Tensor zin = concat_cols(reshape(xm, {coords, 1}), reshape(gm, {coords, 1}));
  Tensor cell0 = detail::lstm_cell(zin, state.h0, state.c0, net.layer0.Wih,
                                   net.layer0.Whh, net.layer0.bih,
                                   net.layer0.bhh);
  Tensor h0 = slice_cols(cell0, 0, net.hidden);
  Tensor c0 = slice_cols(cell0, net.hidden, 2 * net.hidden);
  Tensor cell1 = detail::lstm_cell(h0, state.h1, state.c1, net.layer1.Wih,
                                   net.layer1.Whh, net.layer1.bih,
                                   net.layer1.bhh);
  Tensor h1 = slice_cols(cell1, 0, net.hidden);
  Tensor c1 = slice_cols(cell1, net.hidden, 2 * net.hidden);

  Tensor u = net.trunk.apply(h1);
  auto emit = [&](const Linear& head) { return head.apply(u); };

  EmitResult out;
  out.params.p =
      reshape(mul_scalar(sigmoid(emit(net.head_p)), net.p_max), {b, n});
  out.params.a =
      reshape(mul_scalar(sigmoid(emit(net.head_a)), net.a_max), {b, n});
  out.params.b = reshape(emit(net.head_b), {b, n});
  out.params.b1 = reshape(emit(net.head_b1), {b, n});
  out.params.b2 = reshape(emit(net.head_b2), {b, n});
  out.params.theta = reshape(softplus(emit(net.head_theta)), {b, n});
  out.state = LstmState{h0, c0, h1, c1};
  return out;
}

/// Proximal step in the learned sparse domain: threshold f_t(z) and map
/// back with f_i. With an identity transform this is plain elementwise
/// soft-thresholding of z. The per-coordinate thresholds are averaged
/// within each channel row to produce one threshold per row of codes,
/// since the learned code length differs from the row length.
inline Tensor prox_in_transform(const SparseTransform& t, const Tensor& z,
                                const Tensor& theta) {
  if (t.is_identity) return soft_threshold(z, theta);
  const std::size_t row = 2 * t.n_t;
  if (z.cols() % row != 0)
    throw dimension_error("prox_in_transform: z incompatible with transform");
  const std::size_t n_a = z.cols() / row;
  Tensor zr = to_row_batch(z, n_a, t.n_t);
  Tensor th_rows = row_mean(to_row_batch(theta, n_a, t.n_t));
  Tensor code = t.apply_ft(zr);
  Tensor shrunk = soft_threshold(code, broadcast_cols(th_rows, t.n_code));
  Tensor rec = t.apply_fi(shrunk);
  return from_row_batch(rec, n_a, t.n_t);
}

/// Per-iteration optimizer state for one problem (or a batch of them).
struct L2OState {
  Tensor x;  // current estimate, B x n
  Tensor y;  // auxiliary variable, B x n
  LstmState lstm;
  std::size_t t = 0;

  static L2OState init(const Tensor& x0, std::size_t hidden,
                       std::uint64_t state_seed) {
    L2OState s;
    s.x = x0;
    s.y = x0;
    s.lstm = LstmState::gaussian(x0.size(), hidden, state_seed);
    s.t = 0;
    return s;
  }
};

/// One step of the learned update rule:
///   xh = x - p.grad f(x),  yh = y - p.grad f(y)
///   x+ = prox((1-b).xh + b.yh - b1)   (prox in the learned sparse domain)
///   y+ = x+ + a.(x+ - x) + b2
inline L2OState l2o_step(const L2OState& state, const StepParams& sp,
                         const Tensor& w, const Tensor& s,
                         const SparseTransform& transform) {
  Tensor sm = s.shape().size() == 1 ? reshape(s, {1, s.size()}) : s;
  const Tensor& x = state.x;
  const Tensor& y = state.y;
  if (x.shape() != y.shape() || sp.p.shape() != x.shape())
    throw dimension_error("l2o_step: inconsistent state and parameter shapes");
  Tensor gx = grad_f(w, sm, x);
  Tensor gy = grad_f(w, sm, y);
  Tensor xh = sub(x, mul(sp.p, gx));
  Tensor yh = sub(y, mul(sp.p, gy));
  Tensor ones = Tensor::full(x.shape(), 1.0);
  Tensor z = sub(add(mul(sub(ones, sp.b), xh), mul(sp.b, yh)), sp.b1);
  Tensor x_next = prox_in_transform(transform, z, sp.theta);
  Tensor y_next = add(add(x_next, mul(sp.a, sub(x_next, x))), sp.b2);
  L2OState out;
  out.x = x_next;
  out.y = y_next;
  out.lstm = state.lstm;
  out.t = state.t + 1;
  return out;
}

// ============================================================================
// Full decode + diagnostics
// ============================================================================

struct Trace {
  std::vector<double> objective;     // 0.5||s-Wx||^2 + lambda ||x||_1
  std::vector<double> displacement;  // ||x_t - x_{t-1}||_2
  std::vector<double> b1_norm;
  std::vector<double> b2_norm;
};

struct DecodeOptions {
  std::uint64_t state_seed = 0;
  double trace_lambda = 0.0;  // lambda used for the objective bookkeeping
};

struct DecodeResult {
  Tensor x;  // final estimate, shape {n}
  Trace trace;
};

inline solvers::Mat to_mat(const Tensor& w) {
  solvers::Mat m(w.rows(), w.cols());
  std::copy(w.data(), w.data() + w.size(), m.data.begin());
  return m;
}

namespace detail {

inline double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t.data()[i] * t.data()[i];
  return std::sqrt(acc);
}

inline double l2_dist(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline void record_trace(Trace& trace, const solvers::LassoProblem& prob,
                         const Tensor& x_prev, const Tensor& x_next,
                         const StepParams& sp) {
  solvers::Vec xv(x_next.data(), x_next.data() + x_next.size());
  trace.objective.push_back(solvers::objective(prob, xv));
  trace.displacement.push_back(l2_dist(x_next, x_prev));
  trace.b1_norm.push_back(l2_norm(sp.b1));
  trace.b2_norm.push_back(l2_norm(sp.b2));
}

}  // namespace detail

/// Run the learned decoder for T iterations on one codeword. x and y start
/// at W^T s; the recurrent state starts from seeded N(0,1) draws. The step
/// bound p_max is set to 2 / lambda_max(W^T W).
inline DecodeResult decode(ParamNet net, const SparseTransform& transform,
                           const Tensor& w, const Tensor& s, std::size_t iters,
                           DecodeOptions opts = {}) {
  if (iters < 1) throw contract_error("decode: iteration count must be >= 1");
  net.p_max = 2.0 / solvers::lipschitz(to_mat(w));

  solvers::LassoProblem prob;
  prob.W = to_mat(w);
  prob.s.assign(s.data(), s.data() + s.size());
  prob.lambda = opts.trace_lambda;
  prob.alpha = 1.0;

  Tensor x0 = matmul(reshape(s, {1, s.size()}), w);
  L2OState state = L2OState::init(x0, net.hidden, opts.state_seed);
  DecodeResult result;
  for (std::size_t t = 0; t < iters; ++t) {
    Tensor gx = grad_f(w, reshape(s, {1, s.size()}), state.x);
    EmitResult emitted = emit_params(net, state.x, gx, state.lstm);
    L2OState next = l2o_step(state, emitted.params, w, s, transform);
    next.lstm = emitted.state;
    detail::record_trace(result.trace, prob, state.x, next.x, emitted.params);
    state = std::move(next);
  }
  result.x = reshape(state.x, {state.x.size()});
  return result;
}

/// Decoder run with fixed per-iteration parameters instead of the network.
/// With a = b = b1 = b2 = 0, p = alpha and theta = alpha*lambda this is
/// exactly ISTA.
inline DecodeResult decode_frozen(const StepParams& frozen,
                                  const SparseTransform& transform,
                                  const Tensor& w, const Tensor& s,
                                  std::size_t iters, DecodeOptions opts = {}) {
  if (iters < 1) throw contract_error("decode: iteration count must be >= 1");
  solvers::LassoProblem prob;
  prob.W = to_mat(w);
  prob.s.assign(s.data(), s.data() + s.size());
  prob.lambda = opts.trace_lambda;
  prob.alpha = 1.0;

  Tensor x0 = matmul(reshape(s, {1, s.size()}), w);
  L2OState state;
  state.x = x0;
  state.y = x0;
  DecodeResult result;
  for (std::size_t t = 0; t < iters; ++t) {
    L2OState next = l2o_step(state, frozen, w, s, transform);
    detail::record_trace(result.trace, prob, state.x, next.x, frozen);
    state = std::move(next);
  }
  result.x = reshape(state.x, {state.x.size()});
  return result;
}

/// Constant reduction parameters (a = b = b1 = b2 = 0) for a single
/// instance of dimension n.
inline StepParams make_reduction_params(std::size_t n, double p, double theta) {
  StepParams sp;
  sp.p = Tensor::full({1, n}, p);
  sp.a = Tensor::zeros({1, n});
  sp.b = Tensor::zeros({1, n});
  sp.b1 = Tensor::zeros({1, n});
  sp.b2 = Tensor::zeros({1, n});
  sp.theta = Tensor::full({1, n}, theta);
  return sp;
}

struct ConvergenceReport {
  double last_displacement = 0.0;
  double last_objective = 0.0;
  double threshold = 1e-4;
  std::ptrdiff_t first_below = -1;  // iteration index, -1 if never reached
  double max_b1_norm = 0.0;
  double max_b2_norm = 0.0;
  double last_b1_norm = 0.0;
  double last_b2_norm = 0.0;
};

/// Summarize a decode trace: final displacement, bias-norm history bounds,
/// and the first iteration whose displacement fell below the threshold.
inline ConvergenceReport convergence_report(const Trace& trace,
                                            double threshold = 1e-4) {
  if (trace.displacement.empty())
    throw contract_error("convergence_report: empty trace");
  ConvergenceReport r;
  r.threshold = threshold;
  r.last_displacement = trace.displacement.back();
  r.last_objective = trace.objective.back();
  for (std::size_t i = 0; i < trace.displacement.size(); ++i) {
    if (r.first_below < 0 && trace.displacement[i] < threshold)
      r.first_below = static_cast<std::ptrdiff_t>(i);
    r.max_b1_norm = std::max(r.max_b1_norm, trace.b1_norm[i]);
    r.max_b2_norm = std::max(r.max_b2_norm, trace.b2_norm[i]);
  }
  r.last_b1_norm = trace.b1_norm.back();
  r.last_b2_norm = trace.b2_norm.back();
  return r;
}

}  // namespace csil2o
