#include "ps3/harness/viz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ps3/core/errors.hpp"

namespace ps3 {

std::array<std::uint8_t, 3> heat_color(double score) {
  const double t = (std::clamp(score, -1.0, 1.0) + 1) / 2;
  constexpr double lo[3] = {20, 20, 120}, hi[3] = {250, 230, 40};
  std::array<std::uint8_t, 3> c{};
  for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(std::lround((1 - t) * lo[i] + t * hi[i]));
  return c;
}

Image render_score_heatmap(const ScoreMap& score, std::size_t scale, std::size_t cell_px) {
  if (scale >= score.num_scales()) throw ArgumentError("heatmap: scale " + std::to_string(scale) + " out of range");
  if (cell_px == 0) throw ArgumentError("heatmap: cell size must be positive");
  const GridSpec& g = score.grids[scale];
  Image img(g.cols * cell_px, g.rows * cell_px);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const auto color = heat_color(score.scores[scale][r * g.cols + c]);
      for (std::size_t y = r * cell_px; y < (r + 1) * cell_px; ++y)
        for (std::size_t x = c * cell_px; x < (c + 1) * cell_px; ++x) std::copy(color.begin(), color.end(), img.pixel(x, y));
    }
  return img;
}

Image render_selection_overlay(const ImagePyramid& pyramid, const SelectionSet& selection, std::size_t scale) {
  if (scale >= pyramid.scales.size() || scale >= selection.num_scales())
    throw ArgumentError("overlay: scale " + std::to_string(scale) + " out of range");
  if (!(selection.grids[scale] == pyramid.grids[scale])) throw DimensionError("overlay: selection grid mismatch");
  Image img = to_u8(pyramid.scales[scale]);
  const GridSpec& g = pyramid.grids[scale];
  const std::size_t p = pyramid.patch_side;
  std::vector<bool> keep(g.cells(), false);
  for (std::size_t idx : selection.indices[scale]) keep.at(idx) = true;
  for (std::size_t cell = 0; cell < g.cells(); ++cell) {
    if (keep[cell]) continue;
    const std::size_t r = cell / g.cols, c = cell % g.cols;
    for (std::size_t y = r * p; y < (r + 1) * p; ++y)
      for (std::size_t x = c * p; x < (c + 1) * p; ++x)
        for (int ch = 0; ch < 3; ++ch) img.pixel(x, y)[ch] /= 4;
  }
  return img;
}

namespace {

constexpr int kSweeps = 60;

// Cyclic Jacobi on a symmetric matrix; returns eigenvalues and column
// eigenvectors.
void jacobi(std::vector<double>& a, std::size_t n, std::vector<double>& vecs) {
  vecs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs[k * n + p], vkq = vecs[k * n + q];
          vecs[k * n + p] = c * vkp - s * vkq;
          vecs[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
}

}  // namespace

PcaResult pca_features(const Tensor<double>& tokens) {
  if (tokens.rank() != 2) throw DimensionError("pca: tokens must be [n x d]");
  const std::size_t n = tokens.dim(0), d = tokens.dim(1);
  if (n < 3) throw ArgumentError("pca: needs at least 3 tokens, got " + std::to_string(n));
  PcaResult out;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += tokens.at(i, j);
  for (double& m : out.mean) m /= static_cast<double>(n);

  std::vector<double> centered(n * d), cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = tokens.at(i, j) - out.mean[j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += centered[i * d + a] * centered[i * d + b];
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) cov[b * d + a] = cov[a * d + b] /= static_cast<double>(n - 1);

  std::vector<double> vecs;
  jacobi(cov, d, vecs);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return cov[x * d + x] > cov[y * d + y]; });

  const double top = d ? std::max(cov[order[0] * d + order[0]], 0.0) : 0.0;
  const std::size_t k = std::min<std::size_t>(3, d);
  out.projections.assign(n, {0, 0, 0});
  out.rgb.assign(n, {0.5, 0.5, 0.5});
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t col = order[c];
    const double lambda = cov[col * d + col];
    // Components at round-off level carry no structure.
    if (!(lambda > 1e-12 * top) || top == 0) break;
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = vecs[j * d + col];
    std::vector<double> proj(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) proj[i] += centered[i * d + j] * v[j];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(proj[i]) > std::abs(proj[arg])) arg = i;
    if (proj[arg] < 0) {
      for (double& x : v) x = -x;
      for (double& x : proj) x = -x;
    }
    out.components.push_back(v);
    out.eigenvalues.push_back(lambda);
    const auto [lo, hi] = std::minmax_element(proj.begin(), proj.end());
    for (std::size_t i = 0; i < n; ++i) {
      out.projections[i][c] = proj[i];
      out.rgb[i][c] = *hi > *lo ? (proj[i] - *lo) / (*hi - *lo) : 0.5;
    }
  }
  return out;
}

Image render_pca(const PcaResult& pca, const GridSpec& grid, std::size_t cell_px) {
  if (pca.rgb.size() != grid.cells())
    throw DimensionError("pca image: " + std::to_string(pca.rgb.size()) + " tokens for a " + std::to_string(grid.rows) +
                         "x" + std::to_string(grid.cols) + " grid");
  Image img(grid.cols * cell_px, grid.rows * cell_px);
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    const std::size_t r = cell / grid.cols, c = cell % grid.cols;
    std::uint8_t color[3];
    for (int ch = 0; ch < 3; ++ch) color[ch] = static_cast<std::uint8_t>(std::lround(255 * pca.rgb[cell][ch]));
    for (std::size_t y = r * cell_px; y < (r + 1) * cell_px; ++y)
      for (std::size_t x = c * cell_px; x < (c + 1) * cell_px; ++x) std::copy(color, color + 3, img.pixel(x, y));
  }
  return img;
}

}  // namespace ps3
