#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ps3 {

struct GridSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t cells() const { return rows * cols; }
  bool operator==(const GridSpec&) const = default;
};

struct EncoderConfig {
  std::size_t low_res_side = 64;
  std::size_t patch_side = 8;
  // Scale sides are low_res_side * multiplier, strictly increasing.
  std::vector<std::size_t> scale_multipliers = {2, 4};
  std::size_t embed_dim = 64;
  std::size_t num_heads = 2;
  std::size_t num_layers = 3;
  std::size_t mlp_dim = 128;
  std::size_t aux_blocks = 3;
  // Output channels of each aux block.
  std::vector<std::size_t> aux_channels = {16, 32, 32};
  std::size_t vocab_size = 256;
  std::size_t text_layers = 2;
  std::size_t text_max_len = 16;
  // Maximum patches in one high-res pass.
  std::size_t per_round_cap = 320;
  // Gaussian smoothing of score maps in grid cells; 0 disables it.
  double smoothing_sigma = 0.0;
  // Finest scale is used only for images at or above ratio * max scale side.
  double dynamic_threshold_ratio = 0.7;
  std::uint64_t seed = 0;

  std::size_t num_scales() const { return scale_multipliers.size(); }
  std::size_t scale_side(std::size_t s) const { return low_res_side * scale_multipliers.at(s); }
  std::size_t max_side() const { return num_scales() ? scale_side(num_scales() - 1) : low_res_side; }
  GridSpec low_res_grid() const { return {low_res_side / patch_side, low_res_side / patch_side}; }
  GridSpec scale_grid(std::size_t s) const { return {scale_side(s) / patch_side, scale_side(s) / patch_side}; }
  std::vector<GridSpec> scale_grids() const;
  // The aux encoder reads the largest-but-one scale (the only scale when
  // there is one).
  std::size_t aux_scale_index() const { return num_scales() >= 2 ? num_scales() - 2 : 0; }
  std::size_t aux_grid_side() const;

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Same model with the ladder cut to scales whose side is <= max_side.
  EncoderConfig truncated(std::size_t max_side) const;

  bool operator==(const EncoderConfig&) const = default;
};

// low 64 px, 8 px patches, scales x2/x4, 64-dim, 2 heads, 3 layers.
EncoderConfig desk_profile();
// 378 px low-res, 14 px patches, scales 756/1512/3780, SigLIP-SO400M widths.
// Used for token and FLOP accounting only.
EncoderConfig paper_profile();

void to_json(nlohmann::json& j, const EncoderConfig& cfg);
void from_json(const nlohmann::json& j, EncoderConfig& cfg);

}  // namespace ps3
