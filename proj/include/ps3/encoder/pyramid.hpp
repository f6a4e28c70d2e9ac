#pragma once

#include <cstddef>
#include <vector>

#include "ps3/core/image.hpp"
#include "ps3/core/tensor.hpp"
#include "ps3/encoder/config.hpp"

namespace ps3 {

// One image at the low-res side and at every scale of the ladder. Boxes stay in
// base-image pixels; grids map onto the base image by normalized coordinates.
struct ImagePyramid {
  std::size_t base_width = 0;
  std::size_t base_height = 0;
  std::size_t patch_side = 0;
  ImageF low_res;
  std::vector<ImageF> scales;
  GridSpec low_grid;
  std::vector<GridSpec> grids;
};

ImagePyramid build_pyramid(const ImageF& base, const EncoderConfig& cfg);
ImagePyramid build_pyramid(const Image& base, const EncoderConfig& cfg);

// Flattened patches [n x patch*patch*3] for the given row-major cell indices,
// pixel values mapped from [0,1] to [-1,1].
template <typename T>
Tensor<T> patch_rows(const ImageF& img, std::size_t patch_side, const std::vector<std::size_t>& cells);

// Every cell of the image's grid.
template <typename T>
Tensor<T> all_patch_rows(const ImageF& img, std::size_t patch_side);

// Throws DimensionError if the pyramid was not built for this config.
void check_pyramid(const ImagePyramid& pyramid, const EncoderConfig& cfg);

}  // namespace ps3
