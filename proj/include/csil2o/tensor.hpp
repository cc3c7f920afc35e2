#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csil2o/errors.hpp"
#include "csil2o/rng.hpp"

namespace csil2o {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// One node of the dynamic computation graph. Leaves hold parameters or
/// inputs; interior nodes additionally carry the local backward rule and
/// links to their inputs. The graph is rebuilt on every forward pass.
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, same length as data
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;  // backward already ran through this node
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// ============================================================================
// Tensor handle
// ============================================================================

/// Dense real tensor with reverse-mode autodiff. Value-semantic handle:
/// copies share storage and graph linkage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->data.assign(detail::shape_numel(shape), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor from_vector(Shape shape, std::vector<double> data,
                            bool requires_grad = false) {
    if (detail::shape_numel(shape) != data.size())
      throw dimension_error("from_vector: shape " + detail::shape_str(shape) +
                            " does not match data length " +
                            std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.impl_->data) v = rng.normal() * stddev;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }

  std::size_t rows() const {
    check_rank2("rows");
    return impl_->shape[0];
  }
  std::size_t cols() const {
    check_rank2("cols");
    return impl_->shape[1];
  }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }

  double value() const {
    if (size() != 1) throw contract_error("value(): tensor is not a scalar");
    return impl_->data[0];
  }

  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    check_rank2("at");
    return impl_->data[r * impl_->shape[1] + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->leaf; }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }

  const std::vector<double>& grad() const {
    if (!has_grad())
      throw contract_error("grad(): no gradient populated on this tensor");
    return impl_->grad;
  }

  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

  /// Copy of this tensor's data as a fresh non-graph leaf.
  Tensor detached_copy(bool requires_grad = false) const {
    return from_vector(impl_->shape, impl_->data, requires_grad);
  }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  void check_rank2(const char* who) const {
    if (impl_->shape.size() != 2)
      throw dimension_error(std::string(who) + ": tensor rank " +
                            std::to_string(impl_->shape.size()) + " is not 2");
  }

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op_result(Shape shape,
                               std::vector<const Tensor*> inputs,
                               std::function<void(detail::TensorImpl&)> bp);
};

namespace detail {
inline void accumulate(TensorImpl& t, const std::vector<double>& add) {
  t.ensure_grad();
  for (std::size_t i = 0; i < add.size(); ++i) t.grad[i] += add[i];
}
}  // namespace detail

/// Create the result node of an operation. Graph linkage and the backward
/// rule are recorded only when some input requires grad; otherwise the
/// result is a plain leaf and forward evaluation carries no tape cost.
inline Tensor make_op_result(Shape shape, std::vector<const Tensor*> inputs,
                             std::function<void(detail::TensorImpl&)> bp) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool needs = false;
  for (const Tensor* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    out.impl_->requires_grad = true;
    out.impl_->leaf = false;
    out.impl_->parents.reserve(inputs.size());
    for (const Tensor* in : inputs) out.impl_->parents.push_back(in->impl_ptr());
    out.impl_->backprop = std::move(bp);
  }
  return out;
}

// ============================================================================
// Graph: topological record + reverse traversal
// ============================================================================

/// Topologically ordered record of the operations reachable from one root.
/// backward() walks it in exact reverse order, then marks the interior
/// nodes consumed; running backward again through them is an error.
class Graph {
 public:
  static Graph build(const Tensor& root) {
    Graph g;
    std::unordered_set<detail::TensorImpl*> seen;
    // Iterative post-order DFS; unrolled graphs get deep.
    struct Frame {
      std::shared_ptr<detail::TensorImpl> node;
      std::size_t next_parent = 0;
    };
    std::vector<Frame> stack;
    if (root.impl_ptr()) stack.push_back({root.impl_ptr()});
    while (!stack.empty()) {
      Frame& f = stack.back();
      detail::TensorImpl* n = f.node.get();
      if (f.next_parent == 0) {
        if (seen.count(n)) {
          stack.pop_back();
          continue;
        }
        if (n->consumed)
          throw contract_error(
              "backward: graph node already consumed; re-run the forward pass");
      }
      if (f.next_parent < n->parents.size()) {
        auto child = n->parents[f.next_parent++];
        if (!seen.count(child.get())) stack.push_back({child});
      } else {
        seen.insert(n);
        g.order_.push_back(f.node);
        stack.pop_back();
      }
    }
    return g;
  }

  /// Seed the root with d(root)/d(root) = 1 and push gradients to leaves.
  void run_backward() {
    if (order_.empty()) return;
    detail::TensorImpl* root = order_.back().get();
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      detail::TensorImpl* n = it->get();
      if (n->backprop && n->requires_grad) {
        n->ensure_grad();
        n->backprop(*n);
      }
    }
    for (auto& node : order_) {
      if (!node->leaf) {
        node->consumed = true;
        node->backprop = nullptr;
        node->parents.clear();
      }
    }
  }

  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

/// Reverse-mode pass from a scalar loss. Populates grad on every
/// requires-grad tensor reachable in the graph and consumes the graph.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw contract_error("backward: loss must be a scalar, got shape " +
                         detail::shape_str(loss.shape()));
  if (loss.impl()->consumed)
    throw contract_error(
        "backward: graph node already consumed; re-run the forward pass");
  Graph g = Graph::build(loss);
  g.run_backward();
}

// ============================================================================
// Matrix ops
// ============================================================================

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw dimension_error("matmul: both operands must be rank-2");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw dimension_error("matmul: inner dimensions disagree, " +
                          detail::shape_str(a.shape()) + " vs " +
                          detail::shape_str(b.shape()));
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  Tensor out = make_op_result(
      {m, n}, {&a, &b}, [ai, bi, m, k, n](detail::TensorImpl& self) {
        const double* g = self.grad.data();
        if (ai->requires_grad) {
          ai->ensure_grad();
          // dA[i,k] += sum_j g[i,j] * B[k,j]
          double* ga = ai->grad.data();
          const double* bd = bi->data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = g + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* bk = bd + kk * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bk[j];
              ga[i * k + kk] += acc;
            }
          }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          // dB[k,j] += sum_i A[i,k] * g[i,j]
          double* gb = bi->grad.data();
          const double* ad = ai->data.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = g + i * n;
            const double* arow = ad + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = arow[kk];
              double* gbk = gb + kk * n;
              for (std::size_t j = 0; j < n; ++j) gbk[j] += aik * gi[j];
            }
          }
        }
      });
  // C[i,j] = sum_k A[i,k] B[k,j]; k ascends so rounding is order-stable.
  double* c = out.data();
  const double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* arow = ad + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* bk = bd + kk * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2)
    throw dimension_error("transpose: operand must be rank-2");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto ai = a.impl_ptr();
  Tensor out =
      make_op_result({c, r}, {&a}, [ai, r, c](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            ai->grad[i * c + j] += self.grad[j * r + i];
      });
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  return out;
}

// ============================================================================
// Elementwise ops (equal-shape or scalar-with-tensor broadcasting only)
// ============================================================================

namespace detail {

enum class Broadcast { Equal, LeftScalar, RightScalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b,
                                const char* who) {
  if (a.shape() == b.shape()) return Broadcast::Equal;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  throw dimension_error(std::string(who) + ": incompatible shapes " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto kind = detail::broadcast_kind(a, b, "add");
  const Tensor& big = (kind == detail::Broadcast::LeftScalar) ? b : a;
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  Tensor out = make_op_result(
      big.shape(), {&a, &b}, [ai, bi](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          if (ai->data.size() == self.data.size())
            for (std::size_t i = 0; i < self.data.size(); ++i)
              ai->grad[i] += self.grad[i];
          else
            for (double g : self.grad) ai->grad[0] += g;
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          if (bi->data.size() == self.data.size())
            for (std::size_t i = 0; i < self.data.size(); ++i)
              bi->grad[i] += self.grad[i];
          else
            for (double g : self.grad) bi->grad[0] += g;
        }
      });
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[a.size() == 1 ? 0 : i] +
                    b.data()[b.size() == 1 ? 0 : i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto kind = detail::broadcast_kind(a, b, "sub");
  const Tensor& big = (kind == detail::Broadcast::LeftScalar) ? b : a;
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  Tensor out = make_op_result(
      big.shape(), {&a, &b}, [ai, bi](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          if (ai->data.size() == self.data.size())
            for (std::size_t i = 0; i < self.data.size(); ++i)
              ai->grad[i] += self.grad[i];
          else
            for (double g : self.grad) ai->grad[0] += g;
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          if (bi->data.size() == self.data.size())
            for (std::size_t i = 0; i < self.data.size(); ++i)
              bi->grad[i] -= self.grad[i];
          else
            for (double g : self.grad) bi->grad[0] -= g;
        }
      });
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[a.size() == 1 ? 0 : i] -
                    b.data()[b.size() == 1 ? 0 : i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto kind = detail::broadcast_kind(a, b, "mul");
  const Tensor& big = (kind == detail::Broadcast::LeftScalar) ? b : a;
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  Tensor out = make_op_result(
      big.shape(), {&a, &b}, [ai, bi](detail::TensorImpl& self) {
        const std::size_t n = self.data.size();
        if (ai->requires_grad) {
          ai->ensure_grad();
          if (ai->data.size() == n) {
            const bool bs = bi->data.size() == 1;
            for (std::size_t i = 0; i < n; ++i)
              ai->grad[i] += self.grad[i] * bi->data[bs ? 0 : i];
          } else {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += self.grad[i] * bi->data[i];
            ai->grad[0] += acc;
          }
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          if (bi->data.size() == n) {
            const bool as = ai->data.size() == 1;
            for (std::size_t i = 0; i < n; ++i)
              bi->grad[i] += self.grad[i] * ai->data[as ? 0 : i];
          } else {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += self.grad[i] * ai->data[i];
            bi->grad[0] += acc;
          }
        }
      });
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[a.size() == 1 ? 0 : i] *
                    b.data()[b.size() == 1 ? 0 : i];
  return out;
}

namespace detail {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfn) {
  auto ai = a.impl_ptr();
  Tensor out = make_op_result(
      a.shape(), {&a}, [ai, dfn](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i)
          ai->grad[i] += self.grad[i] * dfn(ai->data[i], self.data[i]);
      });
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = fwd(a.data()[i]);
  return out;
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary_op(
      a,
      [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::tanh(x); },
                          [](double, double y) { return 1.0 - y * y; });
}

// Subgradient 0 at the kink for abs, sign, and max0.
inline Tensor abs(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor sign(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); },
      [](double, double) { return 0.0; });
}

inline Tensor max0(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x + c; },
                          [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x * c; },
                          [c](double, double) { return c; });
}

/// sign(x) * max(0, |x| - theta), elementwise; theta may be scalar.
/// Built from the piecewise primitives so its subgradient convention
/// matches theirs: d/dx = 1{|x|>theta}, d/dtheta = -sign(x) 1{|x|>theta}.
inline Tensor soft_threshold(const Tensor& x, const Tensor& theta) {
  return mul(sign(x), max0(sub(abs(x), theta)));
}

// ============================================================================
// Structural ops
// ============================================================================

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (detail::shape_numel(shape) != a.size())
    throw dimension_error("reshape: element count mismatch");
  auto ai = a.impl_ptr();
  Tensor out =
      make_op_result(std::move(shape), {&a}, [ai](detail::TensorImpl& self) {
        detail::accumulate(*ai, self.grad);
      });
  std::copy(a.data(), a.data() + a.size(), out.data());
  return out;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.rows() != b.rows())
    throw dimension_error("concat_cols: need rank-2 operands with equal rows");
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  Tensor out = make_op_result(
      {r, ca + cb}, {&a, &b}, [ai, bi, r, ca, cb](detail::TensorImpl& self) {
        if (ai->requires_grad) {
          ai->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < ca; ++j)
              ai->grad[i * ca + j] += self.grad[i * (ca + cb) + j];
        }
        if (bi->requires_grad) {
          bi->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < cb; ++j)
              bi->grad[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
        }
      });
  for (std::size_t i = 0; i < r; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca,
              out.data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb,
              out.data() + i * (ca + cb) + ca);
  }
  return out;
}

/// Columns [c0, c1) of a rank-2 tensor.
inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  if (a.shape().size() != 2 || c1 > a.cols() || c0 >= c1)
    throw dimension_error("slice_cols: bad column range");
  const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
  auto ai = a.impl_ptr();
  Tensor out = make_op_result(
      {r, w}, {&a}, [ai, r, c, c0, w](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j)
            ai->grad[i * c + c0 + j] += self.grad[i * w + j];
      });
  for (std::size_t i = 0; i < r; ++i)
    std::copy(a.data() + i * c + c0, a.data() + i * c + c1, out.data() + i * w);
  return out;
}

/// out[r, j] = a[r, perm[j]] for every row r.
inline Tensor permute_cols(const Tensor& a, const std::vector<std::size_t>& perm) {
  if (a.shape().size() != 2 || perm.size() != a.cols())
    throw dimension_error("permute_cols: permutation length must equal cols");
  const std::size_t r = a.rows(), c = a.cols();
  auto ai = a.impl_ptr();
  auto p = std::make_shared<std::vector<std::size_t>>(perm);
  Tensor out = make_op_result(
      {r, c}, {&a}, [ai, p, r, c](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            ai->grad[i * c + (*p)[j]] += self.grad[i * c + j];
      });
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.data()[i * c + j] = a.data()[i * c + perm[j]];
  return out;
}

/// Tile a length-C vector (shape {C} or {1,C}) into an R x C matrix.
inline Tensor broadcast_rows(const Tensor& v, std::size_t r) {
  const std::size_t c = v.size();
  auto vi = v.impl_ptr();
  Tensor out =
      make_op_result({r, c}, {&v}, [vi, r, c](detail::TensorImpl& self) {
        vi->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            vi->grad[j] += self.grad[i * c + j];
      });
  for (std::size_t i = 0; i < r; ++i)
    std::copy(v.data(), v.data() + c, out.data() + i * c);
  return out;
}

/// Tile an R x 1 column into an R x C matrix.
inline Tensor broadcast_cols(const Tensor& v, std::size_t c) {
  if (v.shape().size() != 2 || v.cols() != 1)
    throw dimension_error("broadcast_cols: operand must be R x 1");
  const std::size_t r = v.rows();
  auto vi = v.impl_ptr();
  Tensor out =
      make_op_result({r, c}, {&v}, [vi, r, c](detail::TensorImpl& self) {
        vi->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j];
          vi->grad[i] += acc;
        }
      });
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[i * c + j] = v.data()[i];
  return out;
}

/// Per-row mean of a rank-2 tensor, shape R x 1.
inline Tensor row_mean(const Tensor& a) {
  if (a.shape().size() != 2) throw dimension_error("row_mean: need rank-2");
  const std::size_t r = a.rows(), c = a.cols();
  auto ai = a.impl_ptr();
  Tensor out =
      make_op_result({r, 1}, {&a}, [ai, r, c](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          const double g = self.grad[i] / static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) ai->grad[i * c + j] += g;
        }
      });
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += a.data()[i * c + j];
    out.data()[i] = acc / static_cast<double>(c);
  }
  return out;
}

/// Keep the G largest-magnitude entries of each row, zero the rest.
/// Ties break toward the lower index. Gradient is straight-through on
/// the retained support.
inline Tensor topg_mask(const Tensor& a, std::size_t g) {
  if (a.shape().size() != 2) throw dimension_error("topg_mask: need rank-2");
  const std::size_t r = a.rows(), c = a.cols();
  if (g < 1 || g > c) throw contract_error("topg_mask: G out of range");
  auto mask = std::make_shared<std::vector<unsigned char>>(r * c, 0);
  std::vector<std::size_t> idx(c);
  for (std::size_t i = 0; i < r; ++i) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double* row = a.data() + i * c;
    std::partial_sort(idx.begin(), idx.begin() + g, idx.end(),
                      [row](std::size_t x, std::size_t y) {
                        const double ax = std::fabs(row[x]);
                        const double ay = std::fabs(row[y]);
                        return ax > ay || (ax == ay && x < y);
                      });
    for (std::size_t j = 0; j < g; ++j) (*mask)[i * c + idx[j]] = 1;
  }
  auto ai = a.impl_ptr();
  Tensor out =
      make_op_result({r, c}, {&a}, [ai, mask](detail::TensorImpl& self) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i)
          if ((*mask)[i]) ai->grad[i] += self.grad[i];
      });
  for (std::size_t i = 0; i < r * c; ++i)
    out.data()[i] = (*mask)[i] ? a.data()[i] : 0.0;
  return out;
}

/// Sum of all entries, as a scalar tensor.
inline Tensor sum(const Tensor& a) {
  auto ai = a.impl_ptr();
  Tensor out = make_op_result({1}, {&a}, [ai](detail::TensorImpl& self) {
    ai->ensure_grad();
    for (std::size_t i = 0; i < ai->data.size(); ++i)
      ai->grad[i] += self.grad[0];
  });
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  out.data()[0] = acc;
  return out;
}

/// Sum of squared entries, as a scalar tensor.
inline Tensor sum_squares(const Tensor& a) {
  Tensor d = mul(a, a);
  return sum(d);
}

// ============================================================================
// Adam
// ============================================================================

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update over `params` using their populated grads. Grads are
/// zeroed afterwards; moment buffers are allocated on first use.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].size(), 0.0);
      state.v[p].assign(params[p].size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw contract_error("adam_step: state does not match parameter list");
  for (const Tensor& p : params)
    if (!p.has_grad())
      throw contract_error("adam_step: parameter has no populated grad");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    detail::TensorImpl* t = params[p].impl();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const double g = t->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t->data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    params[p].zero_grad();
  }
}

}  // namespace csil2o
