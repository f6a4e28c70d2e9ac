#pragma once

#include <cstddef>
#include <vector>

#include "ps3/core/box.hpp"
#include "ps3/core/ops.hpp"
#include "ps3/datagen/dataset.hpp"
#include "ps3/encoder/selection.hpp"

namespace ps3 {

// {0,1} map per grid: 1 where the cell center lies in the box. Scales with no
// such cell are all zero and flagged degenerate.
ScoreMap ground_truth_score_map(const Box& box, std::size_t width, std::size_t height,
                                const std::vector<GridSpec>& grids);

// Cellwise max of the ground-truth maps of all regions.
ScoreMap bottom_up_gt(const std::vector<Region>& regions, std::size_t width, std::size_t height,
                      const std::vector<GridSpec>& grids);

// Pairwise sigmoid loss over N matched rows:
//   -(1/N) sum_ij log sigmoid(z_ij (exp(t_prime) <x_i, y_j> + bias)),
// z_ii = 1 and z_ij = -1 otherwise. Rows are used as given; callers pass
// unit-norm embeddings. t_prime and bias are single-valued.
template <typename T>
Var<T> sigmoid_contrastive_loss(Var<T> image_embs, Var<T> text_embs, Var<T> t_prime, Var<T> bias);

template <typename T>
struct SelectionLossTerms {
  Var<T> bce;   // mean over scales of the per-cell mean binary cross entropy
  Var<T> dice;  // mean over scales of 1 - (2 sum pg + 1) / (sum p + sum g + 1)
};

// Scores map to probabilities p = (s + 1) / 2, clamped to [1e-7, 1 - 1e-7].
// One [rows x cols x 1] prediction per grid of gt.
template <typename T>
SelectionLossTerms<T> selection_loss(const std::vector<Var<T>>& predicted, const ScoreMap& gt);

}  // namespace ps3
