#include "ps3/encoder/pyramid.hpp"

#include <numeric>

#include "ps3/core/errors.hpp"

namespace ps3 {

ImagePyramid build_pyramid(const ImageF& base, const EncoderConfig& cfg) {
  cfg.validate();
  if (base.width == 0 || base.height == 0) throw ArgumentError("pyramid: empty image");
  ImagePyramid p;
  p.base_width = base.width;
  p.base_height = base.height;
  p.patch_side = cfg.patch_side;
  p.low_res = resize(base, cfg.low_res_side, cfg.low_res_side);
  p.low_grid = cfg.low_res_grid();
  for (std::size_t s = 0; s < cfg.num_scales(); ++s) {
    p.scales.push_back(resize(base, cfg.scale_side(s), cfg.scale_side(s)));
    p.grids.push_back(cfg.scale_grid(s));
  }
  return p;
}

ImagePyramid build_pyramid(const Image& base, const EncoderConfig& cfg) { return build_pyramid(to_float(base), cfg); }

template <typename T>
Tensor<T> patch_rows(const ImageF& img, std::size_t patch, const std::vector<std::size_t>& cells) {
  const std::size_t cols = img.width / patch, rows = img.height / patch;
  const std::size_t row_len = patch * patch * 3;
  Tensor<T> out({cells.size(), row_len});
  for (std::size_t n = 0; n < cells.size(); ++n) {
    if (cells[n] >= rows * cols) throw DimensionError("patch_rows: cell " + std::to_string(cells[n]) + " outside grid");
    const std::size_t r = cells[n] / cols, c = cells[n] % cols;
    T* o = out.data() + n * row_len;
    for (std::size_t y = 0; y < patch; ++y) {
      const float* src = img.pixel(c * patch, r * patch + y);
      for (std::size_t i = 0; i < patch * 3; ++i) *o++ = static_cast<T>((src[i] - 0.5f) * 2.0f);
    }
  }
  return out;
}

template <typename T>
Tensor<T> all_patch_rows(const ImageF& img, std::size_t patch) {
  std::vector<std::size_t> cells((img.width / patch) * (img.height / patch));
  std::iota(cells.begin(), cells.end(), 0);
  return patch_rows<T>(img, patch, cells);
}

void check_pyramid(const ImagePyramid& p, const EncoderConfig& cfg) {
  auto fail = [](const std::string& what) { throw DimensionError("pyramid/config mismatch: " + what); };
  if (p.patch_side != cfg.patch_side) fail("patch side");
  if (p.low_res.width != cfg.low_res_side || p.low_res.height != cfg.low_res_side) fail("low-res side");
  if (p.scales.size() != cfg.num_scales() || p.grids.size() != cfg.num_scales()) fail("scale count");
  for (std::size_t s = 0; s < cfg.num_scales(); ++s) {
    if (p.scales[s].width != cfg.scale_side(s) || p.scales[s].height != cfg.scale_side(s)) fail("scale side");
    if (!(p.grids[s] == cfg.scale_grid(s))) fail("scale grid");
  }
}

template Tensor<float> patch_rows<float>(const ImageF&, std::size_t, const std::vector<std::size_t>&);
template Tensor<double> patch_rows<double>(const ImageF&, std::size_t, const std::vector<std::size_t>&);
template Tensor<float> all_patch_rows<float>(const ImageF&, std::size_t);
template Tensor<double> all_patch_rows<double>(const ImageF&, std::size_t);

}  // namespace ps3
