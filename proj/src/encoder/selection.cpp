#include "ps3/encoder/selection.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "ps3/core/errors.hpp"
#include "ps3/core/top_k.hpp"

namespace ps3 {

std::size_t SelectionSet::total() const {
  std::size_t n = 0;
  for (const auto& v : indices) n += v.size();
  return n;
}

std::vector<std::size_t> SelectionSet::k_per_scale() const {
  std::vector<std::size_t> k;
  for (const auto& v : indices) k.push_back(v.size());
  return k;
}

std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<std::size_t>& weights) {
  const std::size_t wsum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::vector<std::size_t> out(weights.size(), 0);
  if (total == 0) return out;
  if (wsum == 0) throw ArgumentError("largest_remainder: all weights are zero");
  // Exact integer arithmetic: quotient and remainder of total * w / wsum.
  std::vector<std::pair<std::size_t, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const unsigned __int128 num = static_cast<unsigned __int128>(total) * weights[i];
    out[i] = static_cast<std::size_t>(num / wsum);
    rem.emplace_back(static_cast<std::size_t>(num % wsum), i);
    assigned += out[i];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++out[rem[j].second];
  return out;
}

std::vector<std::size_t> allocate_k(std::int64_t total_k, const std::vector<GridSpec>& grids) {
  if (total_k < 0) throw ArgumentError("allocate_k: total_k is negative");
  std::vector<std::size_t> cells;
  for (const auto& g : grids) cells.push_back(g.cells());
  const std::size_t all = std::accumulate(cells.begin(), cells.end(), std::size_t{0});
  if (static_cast<std::size_t>(total_k) > all)
    throw ArgumentError("allocate_k: total_k " + std::to_string(total_k) + " exceeds " + std::to_string(all) + " cells");
  return largest_remainder(static_cast<std::size_t>(total_k), cells);
}

SelectionSet select_patches(const ScoreMap& score, const std::vector<std::size_t>& k, std::size_t cap) {
  if (k.size() != score.num_scales()) throw DimensionError("select_patches: k has wrong scale count");
  const std::size_t total = std::accumulate(k.begin(), k.end(), std::size_t{0});
  if (total > cap)
    throw ArgumentError("select_patches: " + std::to_string(total) + " patches exceed the per-round cap of " +
                        std::to_string(cap) + "; use the multi-round path");
  SelectionSet sel;
  sel.grids = score.grids;
  for (std::size_t s = 0; s < score.num_scales(); ++s) {
    if (score.scores[s].size() != score.grids[s].cells()) throw DimensionError("select_patches: score/grid mismatch");
    sel.indices.push_back(top_k<double>(score.scores[s], k[s]).indices);
  }
  return sel;
}

std::vector<bool> cells_in_box(const Box& box, std::size_t base_width, std::size_t base_height, const GridSpec& grid) {
  std::vector<bool> in(grid.cells(), false);
  const double cw = static_cast<double>(base_width) / static_cast<double>(grid.cols);
  const double ch = static_cast<double>(base_height) / static_cast<double>(grid.rows);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) * ch;
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) * cw;
      in[r * grid.cols + c] = box.contains(cx, cy);
    }
  }
  return in;
}

std::vector<SelectionSet> plan_rounds(const ScoreMap& score, const std::vector<std::size_t>& k, std::size_t cap) {
  if (cap == 0) throw ArgumentError("plan_rounds: cap must be positive");
  if (k.size() != score.num_scales()) throw DimensionError("plan_rounds: k has wrong scale count");
  for (std::size_t s = 0; s < k.size(); ++s)
    if (k[s] > score.grids[s].cells()) throw ArgumentError("plan_rounds: k exceeds the cells of a scale");

  ScoreMap work = score;
  std::vector<std::size_t> remaining = k;
  std::vector<SelectionSet> rounds;
  std::size_t left = std::accumulate(k.begin(), k.end(), std::size_t{0});
  while (left > 0) {
    const std::size_t budget = std::min(cap, left);
    const std::vector<std::size_t> kr = largest_remainder(budget, remaining);
    SelectionSet sel = select_patches(work, kr, cap);
    for (std::size_t s = 0; s < k.size(); ++s) {
      for (std::size_t i : sel.indices[s]) work.scores[s][i] = -std::numeric_limits<double>::infinity();
      remaining[s] -= kr[s];
    }
    left -= budget;
    rounds.push_back(std::move(sel));
  }
  return rounds;
}

}  // namespace ps3
