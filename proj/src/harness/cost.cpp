#include "ps3/harness/cost.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ps3/core/errors.hpp"

namespace ps3 {

namespace {

using u64 = std::uint64_t;

struct TransformerFlops {
  u64 total = 0;
  u64 attention = 0;
};

// n query tokens attending to n + context keys through every layer.
TransformerFlops transformer(const EncoderConfig& cfg, u64 n, u64 context) {
  const u64 d = cfg.embed_dim, m = cfg.mlp_dim, L = cfg.num_layers;
  const u64 patch_dim = 3 * cfg.patch_side * cfg.patch_side;
  TransformerFlops f;
  f.attention = L * 2 * (2 * n * (n + context) * d);
  const u64 projections = L * (2 * n * d * d * 4);  // q, k, v, out
  const u64 mlp = L * (2 * n * d * m * 2);
  f.total = 2 * n * patch_dim * d + projections + mlp + f.attention;
  return f;
}

u64 aux_flops(const EncoderConfig& cfg) {
  u64 side = cfg.scale_side(cfg.aux_scale_index());
  u64 cin = 3, total = 0;
  for (std::size_t b = 0; b < cfg.aux_blocks; ++b) {
    side /= 2;
    const u64 cout = cfg.aux_channels[b];
    total += 2 * 9 * cin * side * side;     // depthwise 3x3, stride 2
    total += 2 * cin * cout * side * side;  // pointwise
    cin = cout;
  }
  return total + 2 * cin * cfg.embed_dim * side * side;
}

void check_k(const EncoderConfig& cfg, const std::vector<std::size_t>& k) {
  if (k.size() != cfg.num_scales())
    throw ArgumentError("count_tokens: " + std::to_string(k.size()) + " per-scale counts for " +
                        std::to_string(cfg.num_scales()) + " scales");
  for (std::size_t s = 0; s < k.size(); ++s)
    if (k[s] > cfg.scale_grid(s).cells())
      throw ArgumentError("count_tokens: k = " + std::to_string(k[s]) + " exceeds the " +
                          std::to_string(cfg.scale_grid(s).cells()) + " cells of scale " + std::to_string(s));
}

}  // namespace

StageFlops flop_estimate(const EncoderConfig& cfg, const std::vector<std::size_t>& k_per_scale, bool kv_cache) {
  check_k(cfg, k_per_scale);
  StageFlops f;
  const u64 n_low = cfg.low_res_grid().cells();
  f.stage1 = transformer(cfg, n_low, 0).total;
  f.aux = aux_flops(cfg);
  u64 left = std::accumulate(k_per_scale.begin(), k_per_scale.end(), u64{0});
  const u64 cap = std::max<u64>(cfg.per_round_cap, 1);
  while (left > 0) {
    const u64 n = std::min(left, cap);
    const TransformerFlops t = transformer(cfg, n, kv_cache ? n_low : 0);
    f.stage3 += t.total;
    f.stage3_attention += t.attention;
    ++f.stage3_rounds;
    left -= n;
  }
  return f;
}

CostReport count_tokens(const EncoderConfig& cfg, const std::vector<std::size_t>& k_per_scale, bool kv_cache) {
  CostReport r;
  r.flops = flop_estimate(cfg, k_per_scale, kv_cache);
  r.selected_per_scale = k_per_scale;
  r.selected = std::accumulate(k_per_scale.begin(), k_per_scale.end(), std::size_t{0});
  r.hr_tokens = r.selected / 4;
  r.low_res_tokens = cfg.low_res_grid().cells();
  return r;
}

CostReport count_tokens(const EncoderConfig& cfg, const SelectionSet& selection, bool kv_cache) {
  if (selection.grids != cfg.scale_grids()) throw DimensionError("count_tokens: selection grids do not match the config");
  return count_tokens(cfg, selection.k_per_scale(), kv_cache);
}

}  // namespace ps3
