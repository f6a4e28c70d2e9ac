#include "ps3/datagen/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ps3/core/errors.hpp"

namespace ps3 {

std::vector<Box> preset_boxes(std::size_t width, std::size_t height, double side) {
  if (!(side > 0)) throw ArgumentError("preset_boxes: box side must be positive");
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  if (W < side || H < side) return {Box{0, 0, W, H}};
  const std::size_t nx = static_cast<std::size_t>(std::floor(W / side));
  const std::size_t ny = static_cast<std::size_t>(std::floor(H / side));
  const double ox = (W - static_cast<double>(nx) * side) / 2, oy = (H - static_cast<double>(ny) * side) / 2;
  const double r = std::sqrt(1.5);
  auto clipped = [&](double cx, double cy, double w, double h) {
    return Box{std::max(0.0, cx - w / 2), std::max(0.0, cy - h / 2), std::min(W, cx + w / 2), std::min(H, cy + h / 2)};
  };
  std::vector<Box> out;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double cx = ox + (static_cast<double>(i) + 0.5) * side, cy = oy + (static_cast<double>(j) + 0.5) * side;
      out.push_back(clipped(cx, cy, side, side));
      out.push_back(clipped(cx, cy, side * r, side / r));
      out.push_back(clipped(cx, cy, side / r, side * r));
    }
  return out;
}

std::vector<Box> preset_boxes_fraction(std::size_t width, std::size_t height, double fraction) {
  if (!(fraction > 0)) throw ArgumentError("preset_boxes: fraction must be positive");
  return preset_boxes(width, height, fraction * static_cast<double>(std::min(width, height)));
}

double box_saliency(const Box& box, const MaskSet& masks) {
  const double image_area = static_cast<double>(masks.width) * static_cast<double>(masks.height);
  double score = 0;
  for (const Mask& m : masks.masks) {
    const double inter = m.intersection_area(box);
    // Masks that miss the box contribute exactly zero.
    if (inter <= 0) continue;
    const double area = static_cast<double>(m.area());
    score += image_area / std::max(area, 40.0 * 40.0) * (inter / area);
  }
  return score;
}

SalientBoxes select_salient_boxes(const std::vector<Box>& candidates, const MaskSet& masks, std::size_t k) {
  if (k == 0) throw ArgumentError("select_salient_boxes: k must be at least 1");
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) score[i] = box_saliency(candidates[i], masks);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  SalientBoxes out;
  for (std::size_t i : order) {
    if (out.indices.size() == k) break;
    bool clash = false;
    for (const Box& b : out.boxes) clash = clash || b.overlaps(candidates[i]);
    if (clash) continue;
    out.indices.push_back(i);
    out.boxes.push_back(candidates[i]);
    out.scores.push_back(score[i]);
  }
  return out;
}

}  // namespace ps3
