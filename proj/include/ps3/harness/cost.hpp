#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ps3/encoder/config.hpp"
#include "ps3/encoder/selection.hpp"

namespace ps3 {

// Analytic FLOP counts; one multiply-add is 2 FLOPs. Layer norms,
// activations, softmax and positional additions are not counted.
struct StageFlops {
  std::uint64_t stage1 = 0;            // patch embed + transformer over low-res tokens
  std::uint64_t aux = 0;               // convolutional aux encoder and projection
  std::uint64_t stage3 = 0;            // patch embed + transformer over selected patches
  std::uint64_t stage3_attention = 0;  // the QK^T and AV products inside stage3
  std::size_t stage3_rounds = 0;

  std::uint64_t total() const { return stage1 + aux + stage3; }
};

struct CostReport {
  std::vector<std::size_t> selected_per_scale;
  std::size_t selected = 0;
  // Tokens handed downstream after the 2x2 downsampling connector.
  std::size_t hr_tokens = 0;
  std::size_t low_res_tokens = 0;
  StageFlops flops;
};

// Stage 3 runs in rounds of at most per_round_cap selected patches; every
// round attends to its own tokens plus the low-res cache when kv_cache is set.
StageFlops flop_estimate(const EncoderConfig& cfg, const std::vector<std::size_t>& k_per_scale, bool kv_cache = true);

// k_per_scale must match the config's ladder and fit each grid.
CostReport count_tokens(const EncoderConfig& cfg, const std::vector<std::size_t>& k_per_scale, bool kv_cache = true);
CostReport count_tokens(const EncoderConfig& cfg, const SelectionSet& selection, bool kv_cache = true);

}  // namespace ps3
