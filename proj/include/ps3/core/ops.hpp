#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ps3/core/tape.hpp"

// Differentiable primitives. Every op records its output and gradient rule on
// the tape of its inputs. Rank-2 tensors are [rows x cols]; spatial maps are
// [height x width x channels]. Broadcasting is limited to a trailing-dimension
// bias (add_bias).

namespace ps3 {

// Elementwise.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> add_scalar(Var<T> a, T c);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> log(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
// -softplus(-x), stable for large |x|.
template <typename T> Var<T> log_sigmoid(Var<T> a);
// tanh approximation.
template <typename T> Var<T> gelu(Var<T> a);
// Gradient passes only where lo < x < hi.
template <typename T> Var<T> clamp(Var<T> a, T lo, T hi);

// x * s and x + s for a single-valued Var s.
template <typename T> Var<T> scale_by(Var<T> x, Var<T> s);
template <typename T> Var<T> shift_by(Var<T> x, Var<T> s);

// x[..., j] + bias[j].
template <typename T> Var<T> add_bias(Var<T> x, Var<T> bias);

// Reductions to a rank-0 scalar.
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
// [n x d] -> [1 x d].
template <typename T> Var<T> mean_rows(Var<T> a);

// Shape manipulation (copies values).
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> concat_rows(Var<T> a, Var<T> b);
template <typename T> Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& rows);
// out[i] = sum_t weight_t * table[row_t] over the taps of output row i.
template <typename T>
using Taps = std::vector<std::vector<std::pair<std::size_t, T>>>;
template <typename T> Var<T> weighted_gather(Var<T> table, const Taps<T>& taps);
template <typename T> Var<T> embedding_lookup(Var<T> table, const std::vector<std::size_t>& ids);

// Linear algebra.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// x [n x in] * w [in x out] + b [out].
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

// Normalization.
template <typename T> Var<T> softmax(Var<T> x, std::size_t axis);
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-6));
// Unit L2 norm over the last dim; zero rows map to zero.
template <typename T> Var<T> l2_normalize(Var<T> x);

// Convolutions over [H x W x C] maps, zero padding.
// kernel [kh x kw x cin x cout].
template <typename T> Var<T> conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t pad = 0);
enum class Padding { kZero, kReplicate };
// kernel [kh x kw x c].
template <typename T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t pad = 0,
                        Padding padding = Padding::kZero);
// 2x2 average pooling, stride 2. H and W must be even.
template <typename T> Var<T> avg_pool2(Var<T> x);

// Bilinear resampling of [h x w x c] with half-pixel centers and edge clamping.
template <typename T> Var<T> interpolate_bilinear(Var<T> map, std::size_t out_h, std::size_t out_w);

// Multi-head scaled dot-product attention. q [nq x d], k and v [nk x d].
// Keys with key_mask[j] == false are excluded (probability exactly 0).
// An empty mask keeps every key.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const std::vector<bool>& key_mask = {});

// Input-space coordinate of output cell i for a resample from `in` to `out`
// cells: (i + 0.5) * in / out - 0.5, clamped to [0, in - 1].
double half_pixel_coordinate(std::size_t i, std::size_t in, std::size_t out);

// Two interpolation taps (lower index, upper index, weight of upper).
struct LinearTaps {
  std::size_t lo;
  std::size_t hi;
  double w_hi;
};
LinearTaps linear_taps(double coord, std::size_t size);

}  // namespace ps3
