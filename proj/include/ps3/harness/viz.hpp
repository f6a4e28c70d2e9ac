#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ps3/core/image.hpp"
#include "ps3/core/tensor.hpp"
#include "ps3/encoder/pyramid.hpp"
#include "ps3/encoder/selection.hpp"

namespace ps3 {

// Score s in [-1, 1] (clamped) maps to t = (s + 1) / 2 and the color
// (1 - t) * (20, 20, 120) + t * (250, 230, 40), rounded per channel.
std::array<std::uint8_t, 3> heat_color(double score);

// One cell_px x cell_px block per grid cell of the given scale.
Image render_score_heatmap(const ScoreMap& score, std::size_t scale, std::size_t cell_px = 8);

// The pyramid image of `scale` with every unselected patch darkened to a
// quarter of its value (integer division).
Image render_selection_overlay(const ImagePyramid& pyramid, const SelectionSet& selection, std::size_t scale);

struct PcaResult {
  std::vector<double> mean;                     // d
  std::vector<std::vector<double>> components;  // unit eigenvectors, by decreasing eigenvalue
  std::vector<double> eigenvalues;
  std::vector<std::array<double, 3>> projections;  // per token, zero for missing components
  std::vector<std::array<double, 3>> rgb;          // per token, in [0, 1]
};

// Top-3 principal components of the token rows [n x d] from a cyclic Jacobi
// eigendecomposition of the covariance with a fixed sweep count. Each
// component's sign makes the token with the largest |projection| positive,
// so negating every feature leaves the colors unchanged. Channels are min-max
// scaled per component; components beyond the rank (or constant ones) are
// 0.5. Throws ArgumentError for fewer than 3 tokens.
PcaResult pca_features(const Tensor<double>& tokens);

// Per-token colors on a grid, one cell_px block per token, row-major.
Image render_pca(const PcaResult& pca, const GridSpec& grid, std::size_t cell_px = 8);

}  // namespace ps3
