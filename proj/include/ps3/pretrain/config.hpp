#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps3/encoder/config.hpp"

namespace ps3 {

// The pre-training designs that can be switched off one at a time.
struct Designs {
  bool gt_selection = true;       // select patches from the ground-truth box map
  bool inbox_pool = true;         // pool only selected tokens inside the box
  bool mix_global = true;         // global low-res pairs in every batch
  bool avoid_intra_image = true;  // each image at most once per batch
  bool multi_scale = true;        // select at every scale, not just the finest
  bool scale_pe = true;           // per-scale positional offset
  bool kv_cache = true;           // low-res keys/values in high-res attention

  bool operator==(const Designs&) const = default;
};

// Flag names accepted by disable_design, in declaration order:
// gt-selection inbox-pool mix-global intra-image multi-scale scale-pe kv-cache
const std::vector<std::string>& design_names();
void disable_design(Designs& designs, const std::string& name);

struct TrainConfig {
  EncoderConfig encoder = desk_profile();
  std::size_t epochs = 8;
  std::size_t samples_per_epoch = 2000;
  std::size_t batch_size = 8;
  double learning_rate = 2e-3;
  std::size_t warmup_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 3e-4;
  double global_ratio = 0.25;
  double contrastive_weight = 1.0;
  double ce_weight = 1.0;
  double dice_weight = 1.0;
  double t_prime_init = 2.302585092994046;  // log 10
  double bias_init = -10.0;
  // High-res patches per local sample, split over scales by allocate_k.
  std::size_t select_k = 80;
  // The last eval_records dataset records are held out for evaluation.
  std::size_t eval_records = 64;
  std::size_t eval_every = 250;
  std::size_t checkpoint_every = 500;
  std::uint64_t seed = 0;
  Designs designs;

  // epochs * ceil(samples_per_epoch / batch_size).
  std::size_t total_steps() const;
  std::size_t steps_per_epoch() const;
  // Throws ConfigError naming the field.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

}  // namespace ps3
