#pragma once

// Independent reference evaluations shared by the unit tests and the
// acceptance runner. Everything here is written from the definitions with
// plain loops and never calls the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ps3/core/box.hpp"
#include "ps3/datagen/masks.hpp"
#include "ps3/encoder/config.hpp"

namespace oracle {

using ps3::Box;
using ps3::Mask;
using ps3::MaskSet;

inline MaskSet random_masks(std::mt19937& rng, std::size_t w, std::size_t h, std::size_t count) {
  MaskSet ms;
  ms.width = w;
  ms.height = h;
  for (std::size_t m = 0; m < count; ++m) {
    Mask mask;
    const std::size_t rows = 1 + rng() % 8;
    const std::size_t y0 = rng() % h;
    for (std::size_t r = 0; r < rows && y0 + r < h; ++r) {
      const std::size_t x0 = rng() % w;
      const std::size_t len = 1 + rng() % (w - x0);
      mask.runs.push_back({y0 + r, x0, len});
    }
    ms.masks.push_back(mask);
  }
  return ms;
}

inline Box random_int_box(std::mt19937& rng, std::size_t w, std::size_t h) {
  const double x0 = rng() % w, y0 = rng() % h;
  const double x1 = x0 + 1 + rng() % (w - static_cast<std::size_t>(x0));
  const double y1 = y0 + 1 + rng() % (h - static_cast<std::size_t>(y0));
  return {x0, y0, x1, y1};
}

// Per-pixel rasterization of a mask set.
inline std::vector<std::vector<std::uint8_t>> rasterize(const MaskSet& ms) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const Mask& m : ms.masks) {
    std::vector<std::uint8_t> px(ms.width * ms.height, 0);
    for (const auto& r : m.runs)
      for (std::size_t x = r.x0; x < r.x0 + r.length; ++x) px[r.y * ms.width + x] = 1;
    out.push_back(px);
  }
  return out;
}

// Straight pixel-loop saliency for integer boxes.
inline double box_saliency(const Box& b, const MaskSet& ms) {
  const auto raster = rasterize(ms);
  const double image_area = static_cast<double>(ms.width * ms.height);
  double s = 0;
  for (const auto& px : raster) {
    std::size_t area = 0, inside = 0;
    for (std::size_t y = 0; y < ms.height; ++y)
      for (std::size_t x = 0; x < ms.width; ++x) {
        if (!px[y * ms.width + x]) continue;
        ++area;
        if (b.contains(static_cast<double>(x), static_cast<double>(y))) ++inside;
      }
    if (inside == 0) continue;
    s += image_area / std::max(static_cast<double>(area), 1600.0) *
         (static_cast<double>(inside) / static_cast<double>(area));
  }
  return s;
}

// Among all pairwise-disjoint candidate subsets of size <= k, the one whose
// ascending score-rank list is lexicographically smallest (ties ranked by
// index, a missing entry ranking after every candidate). Returned in rank
// order. Exponential in the candidate count.
inline std::vector<std::size_t> best_disjoint_subset(const std::vector<Box>& cands, const MaskSet& ms, std::size_t k) {
  const std::size_t n = cands.size();
  std::vector<double> score;
  for (const Box& b : cands) score.push_back(box_saliency(b, ms));
  std::vector<std::size_t> rank_of(n), by_rank(n);
  for (std::size_t i = 0; i < n; ++i) by_rank[i] = i;
  std::stable_sort(by_rank.begin(), by_rank.end(), [&](auto a, auto b) { return score[a] > score[b]; });
  for (std::size_t r = 0; r < n; ++r) rank_of[by_rank[r]] = r;

  std::vector<std::size_t> best;
  bool have = false;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) members.push_back(i);
    if (members.size() > k) continue;
    bool disjoint = true;
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b)
        disjoint = disjoint && !(cands[members[a]].intersection_area(cands[members[b]]) > 0);
    if (!disjoint) continue;
    std::vector<std::size_t> ranks;
    for (std::size_t i : members) ranks.push_back(rank_of[i]);
    std::sort(ranks.begin(), ranks.end());
    ranks.resize(k, n);
    if (!have || ranks < best) {
      best = ranks;
      have = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t r : best)
    if (r < n) out.push_back(by_rank[r]);
  return out;
}

inline std::vector<double> random_unit_rows(std::mt19937& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g;
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (v[i * d + j] = g(rng)) * v[i * d + j];
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] /= std::sqrt(s);
  }
  return v;
}

// Mean over rows of the summed pairwise sigmoid log-likelihood, labels +1 on
// the diagonal and -1 elsewhere, logits exp(t') * <x_i, y_j> + b.
inline double sigmoid_loss(const std::vector<double>& x, const std::vector<double>& y, std::size_t n, std::size_t d,
                           double t_prime, double bias) {
  const double t = std::exp(t_prime);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += x[i * d + k] * y[j * d + k];
      const double z = i == j ? 1.0 : -1.0;
      const double u = z * (t * dot + bias);
      total += -std::log(1.0 / (1.0 + std::exp(-u)));
    }
  return total / static_cast<double>(n);
}

struct SelectionTerms {
  double bce = 0, dice = 0;
};

// Scores in [-1, 1] map to p = (s + 1) / 2 clamped to [1e-7, 1 - 1e-7]; BCE is
// the per-scale mean, DICE is 1 - (2 sum pg + 1) / (sum p + sum g + 1); both
// are averaged over scales.
inline SelectionTerms selection_loss(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<double>>& gt) {
  SelectionTerms r;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    double bce = 0, pg = 0, ps = 0, gs = 0;
    for (std::size_t i = 0; i < scores[s].size(); ++i) {
      double p = (scores[s][i] + 1) / 2;
      p = std::min(std::max(p, 1e-7), 1 - 1e-7);
      const double g = gt[s][i];
      bce -= g * std::log(p) + (1 - g) * std::log(1 - p);
      pg += p * g;
      ps += p;
      gs += g;
    }
    r.bce += bce / static_cast<double>(scores[s].size());
    r.dice += 1 - (2 * pg + 1) / (ps + gs + 1);
  }
  r.bce /= static_cast<double>(scores.size());
  r.dice /= static_cast<double>(scores.size());
  return r;
}

// Matmul FLOPs of one transformer pass over n tokens attending to n + ctx
// keys, written out layer by layer.
inline std::uint64_t transformer_flops(const ps3::EncoderConfig& c, std::uint64_t n, std::uint64_t ctx) {
  const std::uint64_t d = c.embed_dim, p = c.patch_side;
  std::uint64_t f = 2 * n * (3 * p * p) * d;  // patch embedding
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    f += 2 * n * d * d;          // q
    f += 2 * n * d * d;          // k
    f += 2 * n * d * d;          // v
    f += 2 * n * (n + ctx) * d;  // scores
    f += 2 * n * (n + ctx) * d;  // weighted values
    f += 2 * n * d * d;          // output projection
    f += 2 * n * d * c.mlp_dim;  // mlp up
    f += 2 * n * c.mlp_dim * d;  // mlp down
  }
  return f;
}

}  // namespace oracle
