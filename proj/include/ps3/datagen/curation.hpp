#pragma once

#include <cstddef>
#include <vector>

#include "ps3/core/box.hpp"
#include "ps3/datagen/masks.hpp"

namespace ps3 {

// Square boxes of side `side` tiled edge to edge and centered in the image,
// each followed by two boxes of equal area and aspect 1.5:1 and 1:1.5 sharing
// its center, clipped to the image. An image smaller than `side` in either
// dimension yields one full-image box.
std::vector<Box> preset_boxes(std::size_t width, std::size_t height, double side);
// side = fraction * shorter image side.
std::vector<Box> preset_boxes_fraction(std::size_t width, std::size_t height, double fraction);

// Sum over masks overlapping the box of
//   Area(image) / max(Area(mask), 40*40) * Area(mask & box) / Area(mask).
double box_saliency(const Box& box, const MaskSet& masks);

struct SalientBoxes {
  std::vector<std::size_t> indices;  // into the candidate list, in pick order
  std::vector<Box> boxes;
  std::vector<double> scores;
};

// Greedy: candidates by descending saliency (lower index first on ties), each
// kept unless it overlaps (positive area) an already kept box; stops at k.
SalientBoxes select_salient_boxes(const std::vector<Box>& candidates, const MaskSet& masks, std::size_t k);

}  // namespace ps3
