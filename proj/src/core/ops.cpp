#include "ps3/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ps3 {
namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
  if (!a.valid()) throw ArgumentError("op on an unbound Var");
  return *a.tape;
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape != b.tape) throw ArgumentError("op inputs recorded on different tapes");
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(s));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  Tape<T>& tape = tape_of(a);
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return tape.record(std::move(y), {ia}, [ia, dfdx](Tape<T>& t, std::size_t self) {
    const Tensor<T>& xv = t.value(ia);
    const Tensor<T>& yv = t.value(self);
    const Tensor<T>& g = t.grad(self);
    if (!t.requires_grad(ia)) return;
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

// c[m x n] += a[m x k] * b[k x n]. Rows of a are taken four at a time so each
// row of b is loaded once per block; the inner loop is contiguous in j. Every
// c[i][j] still accumulates p = 0..k-1 in order, so blocking does not change
// results.
template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = bp[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

// Backward of C = A * B: dA += dC * B^T, dB += A^T * dC.
template <typename T>
void matmul_backward(Tape<T>& t, std::size_t ia, std::size_t ib, const Tensor<T>& g, std::size_t m, std::size_t k,
                     std::size_t n) {
  const Tensor<T>& av = t.value(ia);
  const Tensor<T>& bv = t.value(ib);
  if (t.requires_grad(ia)) {
    std::vector<T> bt = transposed(bv.data(), k, n);
    gemm_acc(g.data(), bt.data(), t.grad(ia).data(), m, n, k);
  }
  if (t.requires_grad(ib)) {
    std::vector<T> at = transposed(av.data(), m, k);
    gemm_acc(at.data(), g.data(), t.grad(ib).data(), k, m, n);
  }
}

}  // namespace

double half_pixel_coordinate(std::size_t i, std::size_t in, std::size_t out) {
  double c = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(c, 0.0, static_cast<double>(in - 1));
}

LinearTaps linear_taps(double coord, std::size_t size) {
  std::size_t lo = static_cast<std::size_t>(std::floor(coord));
  if (lo > size - 1) lo = size - 1;
  std::size_t hi = std::min(lo + 1, size - 1);
  double w = coord - static_cast<double>(lo);
  if (hi == lo) w = 0.0;
  return {lo, hi, w};
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b);
  same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  const Tensor<T>& x1 = a.value();
  const Tensor<T>& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] + x2[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor<T>& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  same_tape(a, b);
  same_shape(a, b, "sub");
  Tensor<T> y(a.shape());
  const Tensor<T>& x1 = a.value();
  const Tensor<T>& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] - x2[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  const Tensor<T>& x1 = a.value();
  const Tensor<T>& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] * x2[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& va = t.value(ia);
    const Tensor<T>& vb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  same_tape(a, b);
  same_shape(a, b, "div");
  Tensor<T> y(a.shape());
  const Tensor<T>& x1 = a.value();
  const Tensor<T>& x2 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] / x2[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& va = t.value(ia);
    const Tensor<T>& vb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  return unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      a,
      [](T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> log_sigmoid(Var<T> a) {
  return unary(
      a, [](T x) { return -(std::max(-x, T(0)) + std::log1p(std::exp(-std::abs(x)))); },
      [](T x, T) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        if (x >= 0) {
          const T e = std::exp(-x);
          return e / (T(1) + e);
        }
        return T(1) / (T(1) + std::exp(x));
      });
}

// tanh approximation, written as x * sigmoid(2u) since 0.5 * (1 + tanh(u)) is
// the logistic of 2u and exp is much cheaper than tanh.
template <typename T>
Var<T> gelu(Var<T> a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      a,
      [](T x) {
        const T u = T(kC) * (x + T(0.044715) * x * x * x);
        return x / (T(1) + std::exp(T(-2) * u));
      },
      [](T x, T) {
        const T u = T(kC) * (x + T(0.044715) * x * x * x);
        const T s = T(1) / (T(1) + std::exp(T(-2) * u));
        const T du = T(kC) * (T(1) + T(3 * 0.044715) * x * x);
        return s + x * s * (T(1) - s) * T(2) * du;
      });
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  return unary(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> scale_by(Var<T> x, Var<T> s) {
  same_tape(x, s);
  if (s.size() != 1) throw DimensionError("scale_by: scale must hold one value");
  const Tensor<T>& xv = x.value();
  const T sv = s.value()[0];
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * sv;
  const std::size_t ix = x.id, is = s.id;
  return tape_of(x).record(std::move(y), {ix, is}, [ix, is](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(ix);
    const T sv2 = t.value(is)[0];
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv2;
    }
    if (t.requires_grad(is)) {
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv2[i];
      t.grad(is)[0] += acc;
    }
  });
}

template <typename T>
Var<T> shift_by(Var<T> x, Var<T> s) {
  same_tape(x, s);
  if (s.size() != 1) throw DimensionError("shift_by: shift must hold one value");
  const Tensor<T>& xv = x.value();
  const T sv = s.value()[0];
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + sv;
  const std::size_t ix = x.id, is = s.id;
  return tape_of(x).record(std::move(y), {ix, is}, [ix, is](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(is)) {
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
      t.grad(is)[0] += acc;
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  same_tape(x, bias);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  if (xv.rank() == 0 || bv.rank() != 1 || xv.shape.back() != bv.size()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape) + " does not match trailing dim of " +
                         shape_string(xv.shape));
  }
  const std::size_t n = bv.size();
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + bv[i % n];
  const std::size_t ix = x.id, ib = bias.id;
  return tape_of(x).record(std::move(y), {ix, ib}, [ix, ib, n](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const Tensor<T>& x = a.value();
  T acc = 0;
  for (T v : x.values) acc += v;
  const std::size_t ia = a.id;
  return tape_of(a).record(Tensor<T>::scalar(acc), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> mean_rows(Var<T> a) {
  const Tensor<T>& x = a.value();
  require_rank(x.shape, 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw DimensionError("mean_rows: no rows");
  Tensor<T> y({1, d});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[c] += x[r * d + c];
  const T inv = T(1) / static_cast<T>(n);
  for (T& v : y.values) v *= inv;
  const std::size_t ia = a.id;
  return tape_of(a).record(std::move(y), {ia}, [ia, n, d, inv](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[c] * inv;
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  Tensor<T> y(std::move(shape), a.value().values);
  const std::size_t ia = a.id;
  return tape_of(a).record(std::move(y), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& x = a.value();
  require_rank(x.shape, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> y({c, r}, transposed(x.data(), r, c));
  const std::size_t ia = a.id;
  return tape_of(a).record(std::move(y), {ia}, [ia, r, c](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const Tensor<T>& x1 = a.value();
  const Tensor<T>& x2 = b.value();
  require_rank(x1.shape, 2, "concat_rows");
  require_rank(x2.shape, 2, "concat_rows");
  if (x1.dim(1) != x2.dim(1)) {
    throw DimensionError("concat_rows: column mismatch " + shape_string(x1.shape) + " vs " + shape_string(x2.shape));
  }
  const std::size_t n1 = x1.size();
  std::vector<T> v(x1.values);
  v.insert(v.end(), x2.values.begin(), x2.values.end());
  Tensor<T> y({x1.dim(0) + x2.dim(0), x1.dim(1)}, std::move(v));
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib, n1](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < n1; ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = n1; i < g.size(); ++i) gb[i - n1] += g[i];
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& rows) {
  const Tensor<T>& x = a.value();
  require_rank(x.shape, 2, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor<T> y({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(x.data() + rows[i] * d, d, y.data() + i * d);
  }
  const std::size_t ia = a.id;
  return tape_of(a).record(std::move(y), {ia}, [ia, rows, d](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) ga[rows[i] * d + c] += g[i * d + c];
  });
}

template <typename T>
Var<T> weighted_gather(Var<T> table, const Taps<T>& taps) {
  const Tensor<T>& x = table.value();
  require_rank(x.shape, 2, "weighted_gather");
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor<T> y({taps.size(), d});
  for (std::size_t i = 0; i < taps.size(); ++i) {
    for (const auto& [row, w] : taps[i]) {
      if (row >= n) throw DimensionError("weighted_gather: row out of range");
      for (std::size_t c = 0; c < d; ++c) y[i * d + c] += w * x[row * d + c];
    }
  }
  const std::size_t ia = table.id;
  return tape_of(table).record(std::move(y), {ia}, [ia, taps, d](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < taps.size(); ++i)
      for (const auto& [row, w] : taps[i])
        for (std::size_t c = 0; c < d; ++c) ga[row * d + c] += w * g[i * d + c];
  });
}

template <typename T>
Var<T> embedding_lookup(Var<T> table, const std::vector<std::size_t>& ids) {
  return gather_rows(table, ids);
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank(av.shape, 2, "matmul");
  require_rank(bv.shape, 2, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(av.shape) + " x " + shape_string(bv.shape));
  }
  Tensor<T> y({m, n});
  gemm_acc(av.data(), bv.data(), y.data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
    matmul_backward(t, ia, ib, t.grad(self), m, k, n);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  same_tape(x, w);
  same_tape(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  require_rank(xv.shape, 2, "linear");
  require_rank(wv.shape, 2, "linear");
  const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
  if (wv.dim(0) != k || bv.rank() != 1 || bv.size() != n) {
    throw DimensionError("linear: " + shape_string(xv.shape) + " x " + shape_string(wv.shape) + " + " +
                         shape_string(bv.shape));
  }
  Tensor<T> y({m, n});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(bv.data(), n, y.data() + i * n);
  gemm_acc(xv.data(), wv.data(), y.data(), m, k, n);
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return tape_of(x).record(std::move(y), {ix, iw, ib}, [ix, iw, ib, m, k, n](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    matmul_backward(t, ix, iw, g, m, k, n);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  if (axis >= xv.rank()) throw ArgumentError("softmax: axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const std::size_t len = xv.dim(axis);
  Tensor<T> y(xv.shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T s = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= s;
    }
  }
  const std::size_t ix = x.id;
  return tape_of(x).record(std::move(y), {ix}, [ix, outer, inner, len](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += yv[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = xv.shape.back();
  if (gv.size() != d || bv.size() != d) throw DimensionError("layer_norm: gain/bias size mismatch");
  const std::size_t rows = xv.size() / d;
  Tensor<T> y(xv.shape);
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (xr[c] - mu) * is;
      xhat[r * d + c] = h;
      y[r * d + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return tape_of(x).record(
      std::move(y), {ix, ig, ib},
      [ix, ig, ib, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& gv2 = t.value(ig);
        if (t.requires_grad(ig)) {
          Tensor<T>& gg = t.grad(ig);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (t.requires_grad(ib)) {
          Tensor<T>& gb = t.grad(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (t.requires_grad(ix)) {
          Tensor<T>& gx = t.grad(ix);
          std::vector<T> dh(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < d; ++c) {
              dh[c] = g[r * d + c] * gv2[c];
              m1 += dh[c];
              m2 += dh[c] * xhat[r * d + c];
            }
            m1 /= static_cast<T>(d);
            m2 /= static_cast<T>(d);
            for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += inv_std[r] * (dh[c] - m1 - xhat[r * d + c] * m2);
          }
        }
      });
}

template <typename T>
Var<T> l2_normalize(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("l2_normalize: scalar input");
  const std::size_t d = xv.shape.back();
  const std::size_t rows = xv.size() / d;
  Tensor<T> y(xv.shape);
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) s += xv[r * d + c] * xv[r * d + c];
    const T nrm = std::sqrt(s);
    norms[r] = nrm;
    if (nrm > T(0))
      for (std::size_t c = 0; c < d; ++c) y[r * d + c] = xv[r * d + c] / nrm;
  }
  const std::size_t ix = x.id;
  return tape_of(x).record(std::move(y), {ix}, [ix, d, rows, norms = std::move(norms)](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == T(0)) continue;
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += yv[r * d + c] * g[r * d + c];
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += (g[r * d + c] - yv[r * d + c] * dot) / norms[r];
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t pad) {
  same_tape(x, kernel);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  require_rank(xv.shape, 3, "conv2d");
  require_rank(kv.shape, 4, "conv2d kernel");
  const std::size_t H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
  const std::size_t KH = kv.dim(0), KW = kv.dim(1), CO = kv.dim(3);
  if (kv.dim(2) != C) throw DimensionError("conv2d: kernel expects " + std::to_string(kv.dim(2)) + " channels");
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (H + 2 * pad < KH || W + 2 * pad < KW) throw DimensionError("conv2d: kernel larger than padded input");
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<T> y({OH, OW, CO});
  for (std::size_t oy = 0; oy < OH; ++oy)
    for (std::size_t ox = 0; ox < OW; ++ox) {
      T* out = y.data() + (oy * OW + ox) * CO;
      for (std::size_t ky = 0; ky < KH; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < KW; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const T* in = xv.data() + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C;
          const T* kk = kv.data() + (ky * KW + kx) * C * CO;
          gemm_acc(in, kk, out, 1, C, CO);
        }
      }
    }
  const std::size_t ixv = x.id, ik = kernel.id;
  return tape_of(x).record(std::move(y), {ixv, ik}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(ixv);
    const Tensor<T>& kv2 = t.value(ik);
    const bool gx_on = t.requires_grad(ixv), gk_on = t.requires_grad(ik);
    T* gx = gx_on ? t.grad(ixv).data() : nullptr;
    T* gk = gk_on ? t.grad(ik).data() : nullptr;
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const T* go = g.data() + (oy * OW + ox) * CO;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const long ixx = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ixx < 0 || ixx >= static_cast<long>(W)) continue;
            const std::size_t in_off = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ixx)) * C;
            const std::size_t k_off = (ky * KW + kx) * C * CO;
            for (std::size_t c = 0; c < C; ++c) {
              const T* kr = kv2.data() + k_off + c * CO;
              if (gx) {
                T acc = 0;
                for (std::size_t o = 0; o < CO; ++o) acc += go[o] * kr[o];
                gx[in_off + c] += acc;
              }
              if (gk) {
                const T xval = xv2[in_off + c];
                T* gkr = gk + k_off + c * CO;
                for (std::size_t o = 0; o < CO; ++o) gkr[o] += xval * go[o];
              }
            }
          }
        }
      }
  });
}

template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t pad, Padding padding) {
  same_tape(x, kernel);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  require_rank(xv.shape, 3, "depthwise_conv2d");
  require_rank(kv.shape, 3, "depthwise_conv2d kernel");
  const std::size_t H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
  const std::size_t KH = kv.dim(0), KW = kv.dim(1);
  if (kv.dim(2) != C) throw DimensionError("depthwise_conv2d: channel mismatch");
  if (stride == 0) throw ArgumentError("depthwise_conv2d: stride must be positive");
  if (H + 2 * pad < KH || W + 2 * pad < KW) throw DimensionError("depthwise_conv2d: kernel larger than input");
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  // Source index per output coordinate and kernel offset; -1 marks a zero tap.
  auto source = [&](std::size_t o, std::size_t kk, std::size_t n) -> long {
    long i = static_cast<long>(o * stride + kk) - static_cast<long>(pad);
    if (i >= 0 && i < static_cast<long>(n)) return i;
    if (padding == Padding::kZero) return -1;
    return std::clamp(i, 0L, static_cast<long>(n) - 1);
  };
  std::vector<long> sy(OH * KH), sx(OW * KW);
  for (std::size_t o = 0; o < OH; ++o)
    for (std::size_t kk = 0; kk < KH; ++kk) sy[o * KH + kk] = source(o, kk, H);
  for (std::size_t o = 0; o < OW; ++o)
    for (std::size_t kk = 0; kk < KW; ++kk) sx[o * KW + kk] = source(o, kk, W);
  Tensor<T> y({OH, OW, C});
  for (std::size_t oy = 0; oy < OH; ++oy)
    for (std::size_t ox = 0; ox < OW; ++ox) {
      T* out = y.data() + (oy * OW + ox) * C;
      for (std::size_t ky = 0; ky < KH; ++ky) {
        const long iy = sy[oy * KH + ky];
        if (iy < 0) continue;
        for (std::size_t kx = 0; kx < KW; ++kx) {
          const long ix = sx[ox * KW + kx];
          if (ix < 0) continue;
          const T* in = xv.data() + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C;
          const T* kk = kv.data() + (ky * KW + kx) * C;
          for (std::size_t c = 0; c < C; ++c) out[c] += in[c] * kk[c];
        }
      }
    }
  const std::size_t ixv = x.id, ik = kernel.id;
  return tape_of(x).record(std::move(y), {ixv, ik}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv2 = t.value(ixv);
    const Tensor<T>& kv2 = t.value(ik);
    T* gx = t.requires_grad(ixv) ? t.grad(ixv).data() : nullptr;
    T* gk = t.requires_grad(ik) ? t.grad(ik).data() : nullptr;
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const T* go = g.data() + (oy * OW + ox) * C;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const long iy = sy[oy * KH + ky];
          if (iy < 0) continue;
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const long ixx = sx[ox * KW + kx];
            if (ixx < 0) continue;
            const std::size_t in_off = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ixx)) * C;
            const std::size_t k_off = (ky * KW + kx) * C;
            if (gx)
              for (std::size_t c = 0; c < C; ++c) gx[in_off + c] += go[c] * kv2[k_off + c];
            if (gk)
              for (std::size_t c = 0; c < C; ++c) gk[k_off + c] += go[c] * xv2[in_off + c];
          }
        }
      }
  });
}

template <typename T>
Var<T> avg_pool2(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape, 3, "avg_pool2");
  const std::size_t H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
  if (H % 2 || W % 2) throw DimensionError("avg_pool2: odd spatial size " + shape_string(xv.shape));
  const std::size_t OH = H / 2, OW = W / 2;
  Tensor<T> y({OH, OW, C});
  for (std::size_t oy = 0; oy < OH; ++oy)
    for (std::size_t ox = 0; ox < OW; ++ox)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const T* in = xv.data() + ((2 * oy + dy) * W + 2 * ox + dx) * C;
          T* out = y.data() + (oy * OW + ox) * C;
          for (std::size_t c = 0; c < C; ++c) out[c] += T(0.25) * in[c];
        }
  const std::size_t ix = x.id;
  return tape_of(x).record(std::move(y), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            T* gi = gx.data() + ((2 * oy + dy) * W + 2 * ox + dx) * C;
            const T* go = g.data() + (oy * OW + ox) * C;
            for (std::size_t c = 0; c < C; ++c) gi[c] += T(0.25) * go[c];
          }
  });
}

template <typename T>
Var<T> interpolate_bilinear(Var<T> map, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& xv = map.value();
  require_rank(xv.shape, 3, "interpolate_bilinear");
  const std::size_t h = xv.dim(0), w = xv.dim(1), C = xv.dim(2);
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) throw DimensionError("interpolate_bilinear: empty grid");
  std::vector<LinearTaps> ty(out_h), tx(out_w);
  for (std::size_t i = 0; i < out_h; ++i) ty[i] = linear_taps(half_pixel_coordinate(i, h, out_h), h);
  for (std::size_t j = 0; j < out_w; ++j) tx[j] = linear_taps(half_pixel_coordinate(j, w, out_w), w);
  Tensor<T> y({out_h, out_w, C});
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j) {
      const T wy = static_cast<T>(ty[i].w_hi), wx = static_cast<T>(tx[j].w_hi);
      const T w00 = (T(1) - wy) * (T(1) - wx), w01 = (T(1) - wy) * wx, w10 = wy * (T(1) - wx), w11 = wy * wx;
      const T* p00 = xv.data() + (ty[i].lo * w + tx[j].lo) * C;
      const T* p01 = xv.data() + (ty[i].lo * w + tx[j].hi) * C;
      const T* p10 = xv.data() + (ty[i].hi * w + tx[j].lo) * C;
      const T* p11 = xv.data() + (ty[i].hi * w + tx[j].hi) * C;
      T* out = y.data() + (i * out_w + j) * C;
      for (std::size_t c = 0; c < C; ++c) out[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
    }
  const std::size_t ix = map.id;
  return tape_of(map).record(std::move(y), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const T wy = static_cast<T>(ty[i].w_hi), wx = static_cast<T>(tx[j].w_hi);
        const T w00 = (T(1) - wy) * (T(1) - wx), w01 = (T(1) - wy) * wx, w10 = wy * (T(1) - wx), w11 = wy * wx;
        const T* go = g.data() + (i * out_w + j) * C;
        T* g00 = gx.data() + (ty[i].lo * w + tx[j].lo) * C;
        T* g01 = gx.data() + (ty[i].lo * w + tx[j].hi) * C;
        T* g10 = gx.data() + (ty[i].hi * w + tx[j].lo) * C;
        T* g11 = gx.data() + (ty[i].hi * w + tx[j].hi) * C;
        for (std::size_t c = 0; c < C; ++c) {
          g00[c] += w00 * go[c];
          g01[c] += w01 * go[c];
          g10[c] += w10 * go[c];
          g11[c] += w11 * go[c];
        }
      }
  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const std::vector<bool>& key_mask) {
  same_tape(q, k);
  same_tape(q, v);
  const Tensor<T>& qv = q.value();
  const Tensor<T>& kv = k.value();
  const Tensor<T>& vv = v.value();
  require_rank(qv.shape, 2, "attention q");
  require_rank(kv.shape, 2, "attention k");
  require_rank(vv.shape, 2, "attention v");
  const std::size_t nq = qv.dim(0), nk = kv.dim(0), d = qv.dim(1);
  if (kv.dim(1) != d || vv.dim(1) != d || vv.dim(0) != nk) throw DimensionError("attention: q/k/v shape mismatch");
  if (heads == 0 || d % heads) throw DimensionError("attention: dim not divisible by heads");
  if (!key_mask.empty() && key_mask.size() != nk) throw DimensionError("attention: key mask length mismatch");
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < nk; ++j)
    if (key_mask.empty() || key_mask[j]) keep.push_back(j);
  if (keep.empty() && nq > 0) throw ArgumentError("attention: every key is masked");
  const std::size_t dh = d / heads, nkept = keep.size();
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));

  // probs[h][i][jj] over kept keys only
  std::vector<T> probs(heads * nq * nkept);
  Tensor<T> y({nq, d});
  std::vector<T> kt(dh * nkept), vh(nkept * dh);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t jj = 0; jj < nkept; ++jj)
      for (std::size_t p = 0; p < dh; ++p) {
        kt[p * nkept + jj] = kv[keep[jj] * d + h * dh + p];
        vh[jj * dh + p] = vv[keep[jj] * d + h * dh + p];
      }
    for (std::size_t i = 0; i < nq; ++i) {
      T* s = probs.data() + (h * nq + i) * nkept;
      const T* qi = qv.data() + i * d + h * dh;
      for (std::size_t p = 0; p < dh; ++p) {
        const T a = qi[p] * sc;
        const T* kr = kt.data() + p * nkept;
        for (std::size_t jj = 0; jj < nkept; ++jj) s[jj] += a * kr[jj];
      }
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t jj = 0; jj < nkept; ++jj) mx = std::max(mx, s[jj]);
      T tot = 0;
      for (std::size_t jj = 0; jj < nkept; ++jj) {
        s[jj] = std::exp(s[jj] - mx);
        tot += s[jj];
      }
      for (std::size_t jj = 0; jj < nkept; ++jj) s[jj] /= tot;
      T* out = y.data() + i * d + h * dh;
      for (std::size_t jj = 0; jj < nkept; ++jj) {
        const T pj = s[jj];
        const T* vr = vh.data() + jj * dh;
        for (std::size_t p = 0; p < dh; ++p) out[p] += pj * vr[p];
      }
    }
  }

  const std::size_t iq = q.id, ik = k.id, iv = v.id;
  return tape_of(q).record(
      std::move(y), {iq, ik, iv},
      [=, probs = std::move(probs), keep = std::move(keep)](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& qv2 = t.value(iq);
        const Tensor<T>& kv2 = t.value(ik);
        const Tensor<T>& vv2 = t.value(iv);
        T* gq = t.requires_grad(iq) ? t.grad(iq).data() : nullptr;
        T* gk = t.requires_grad(ik) ? t.grad(ik).data() : nullptr;
        T* gv = t.requires_grad(iv) ? t.grad(iv).data() : nullptr;
        std::vector<T> vt(dh * nkept), kh(nkept * dh), ds(nkept);
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t jj = 0; jj < nkept; ++jj)
            for (std::size_t p = 0; p < dh; ++p) {
              vt[p * nkept + jj] = vv2[keep[jj] * d + h * dh + p];
              kh[jj * dh + p] = kv2[keep[jj] * d + h * dh + p];
            }
          for (std::size_t i = 0; i < nq; ++i) {
            const T* pr = probs.data() + (h * nq + i) * nkept;
            const T* go = g.data() + i * d + h * dh;
            // dP = dO * V^T
            std::fill(ds.begin(), ds.end(), T(0));
            for (std::size_t p = 0; p < dh; ++p) {
              const T a = go[p];
              const T* vr = vt.data() + p * nkept;
              for (std::size_t jj = 0; jj < nkept; ++jj) ds[jj] += a * vr[jj];
            }
            if (gv)
              for (std::size_t jj = 0; jj < nkept; ++jj) {
                T* gvr = gv + keep[jj] * d + h * dh;
                const T pj = pr[jj];
                for (std::size_t p = 0; p < dh; ++p) gvr[p] += pj * go[p];
              }
            T dot = 0;
            for (std::size_t jj = 0; jj < nkept; ++jj) dot += pr[jj] * ds[jj];
            for (std::size_t jj = 0; jj < nkept; ++jj) ds[jj] = pr[jj] * (ds[jj] - dot) * sc;
            if (gq) {
              T* gqr = gq + i * d + h * dh;
              for (std::size_t jj = 0; jj < nkept; ++jj) {
                const T a = ds[jj];
                const T* kr = kh.data() + jj * dh;
                for (std::size_t p = 0; p < dh; ++p) gqr[p] += a * kr[p];
              }
            }
            if (gk) {
              const T* qi = qv2.data() + i * d + h * dh;
              for (std::size_t jj = 0; jj < nkept; ++jj) {
                T* gkr = gk + keep[jj] * d + h * dh;
                const T a = ds[jj];
                for (std::size_t p = 0; p < dh; ++p) gkr[p] += a * qi[p];
              }
            }
          }
        }
      });
}

#define PS3_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add(Var<T>, Var<T>);                                                           \
  template Var<T> sub(Var<T>, Var<T>);                                                           \
  template Var<T> mul(Var<T>, Var<T>);                                                           \
  template Var<T> scale(Var<T>, T);                                                              \
  template Var<T> add_scalar(Var<T>, T);                                                         \
  template Var<T> exp(Var<T>);                                                                   \
  template Var<T> log(Var<T>);                                                                   \
  template Var<T> sigmoid(Var<T>);                                                               \
  template Var<T> div(Var<T>, Var<T>);                                                           \
  template Var<T> log_sigmoid(Var<T>);                                                           \
  template Var<T> gelu(Var<T>);                                                                  \
  template Var<T> clamp(Var<T>, T, T);                                                           \
  template Var<T> scale_by(Var<T>, Var<T>);                                                      \
  template Var<T> shift_by(Var<T>, Var<T>);                                                      \
  template Var<T> add_bias(Var<T>, Var<T>);                                                      \
  template Var<T> sum(Var<T>);                                                                   \
  template Var<T> mean(Var<T>);                                                                  \
  template Var<T> mean_rows(Var<T>);                                                             \
  template Var<T> reshape(Var<T>, Shape);                                                        \
  template Var<T> transpose(Var<T>);                                                             \
  template Var<T> concat_rows(Var<T>, Var<T>);                                                   \
  template Var<T> gather_rows(Var<T>, const std::vector<std::size_t>&);                          \
  template Var<T> weighted_gather(Var<T>, const Taps<T>&);                                       \
  template Var<T> embedding_lookup(Var<T>, const std::vector<std::size_t>&);                     \
  template Var<T> matmul(Var<T>, Var<T>);                                                        \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                \
  template Var<T> softmax(Var<T>, std::size_t);                                                  \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                         \
  template Var<T> l2_normalize(Var<T>);                                                          \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, std::size_t);                              \
  template Var<T> depthwise_conv2d(Var<T>, Var<T>, std::size_t, std::size_t, Padding);           \
  template Var<T> avg_pool2(Var<T>);                                                             \
  template Var<T> interpolate_bilinear(Var<T>, std::size_t, std::size_t);                        \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::size_t, const std::vector<bool>&);

PS3_INSTANTIATE_OPS(float)
PS3_INSTANTIATE_OPS(double)

}  // namespace ps3
