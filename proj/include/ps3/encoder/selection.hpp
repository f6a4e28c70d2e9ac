#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ps3/core/box.hpp"
#include "ps3/encoder/config.hpp"

namespace ps3 {

enum class Provenance { kPredicted, kGroundTruth };

// Per-scale grids of selection scores, row-major cells.
struct ScoreMap {
  std::vector<GridSpec> grids;
  std::vector<std::vector<double>> scores;
  Provenance provenance = Provenance::kPredicted;
  // Ground-truth scales whose box covered no cell center.
  std::vector<bool> degenerate;

  std::size_t num_scales() const { return grids.size(); }
};

// Per-scale ascending cell indices.
struct SelectionSet {
  std::vector<GridSpec> grids;
  std::vector<std::vector<std::size_t>> indices;

  std::size_t num_scales() const { return grids.size(); }
  std::size_t total() const;
  std::vector<std::size_t> k_per_scale() const;
};

// Splits `total` over integer weights in proportion, flooring and then handing
// the remaining units to the largest fractional parts (lower index on ties).
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<std::size_t>& weights);

// Per-scale k proportional to each scale's cell count; sums to total_k.
std::vector<std::size_t> allocate_k(std::int64_t total_k, const std::vector<GridSpec>& grids);

// Top-k per scale (lowest index wins ties). Throws ArgumentError when the
// per-round total exceeds cap.
SelectionSet select_patches(const ScoreMap& score, const std::vector<std::size_t>& k_per_scale, std::size_t cap);

// Cell (r, c) of `grid` is inside `box` iff its center, mapped to base-image
// pixels, lies in the half-open box.
std::vector<bool> cells_in_box(const Box& box, std::size_t base_width, std::size_t base_height, const GridSpec& grid);

// Rounds of at most `cap` patches covering allocate_k(total_k) in total. Each
// round picks the best cells not taken by earlier rounds; the round budget is
// split over scales in proportion to what each scale still has to select.
std::vector<SelectionSet> plan_rounds(const ScoreMap& score, const std::vector<std::size_t>& k_per_scale,
                                      std::size_t cap);

}  // namespace ps3
