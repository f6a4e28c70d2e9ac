#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps3/datagen/dataset.hpp"
#include "ps3/encoder/config.hpp"
#include "ps3/encoder/selection.hpp"
#include "ps3/harness/cost.hpp"

namespace ps3 {

enum class Regime { kWholeImage, kConstantCost, kConstantRes, kTestTime };

const char* to_string(Regime r);
// Throws ConfigError listing the known names.
Regime regime_from_string(const std::string& s);

struct SchedulePoint {
  std::size_t max_res = 0;  // top of the scale ladder
  double train_fraction = 1.0;
  double test_fraction = 1.0;
  // Relative to the checkpoint directory; empty means default_checkpoint_name.
  std::string checkpoint;
};

struct ScalingSchedule {
  Regime regime = Regime::kWholeImage;
  std::vector<SchedulePoint> points;

  // Fractions in (0, 1], max_res a scale side of cfg, plus the regime's rule:
  //   whole-image    every fraction is 1
  //   constant-cost  every point selects the same number of patches
  //   constant-res   one max_res
  //   test-time      one (max_res, train_fraction), hence one checkpoint
  // Throws ConfigError.
  void validate(const EncoderConfig& cfg) const;
};

void to_json(nlohmann::json& j, const ScalingSchedule& s);
void from_json(const nlohmann::json& j, ScalingSchedule& s);
ScalingSchedule read_schedule(const std::filesystem::path& path);

// The four regimes over a config's ladder. Constant-cost keeps the patch
// count of the smallest scale at full selection.
ScalingSchedule default_schedule(Regime regime, const EncoderConfig& cfg);

// "res<max_res>_train<train_fraction>.ps3", fraction printed with %g.
std::string default_checkpoint_name(const SchedulePoint& p);

// Patches selected at a point: round(test_fraction * cells of the truncated ladder).
std::size_t point_total_k(const EncoderConfig& cfg, const SchedulePoint& p);

// Per-scale k for an image of side image_res. Scales other than the finest
// are active above the low-res side; the finest scale only from
// dynamic_threshold_ratio * max_side up. total_k is split over the active
// scales in proportion to their cell counts (largest remainder).
std::vector<std::size_t> dynamic_resolution_schedule(std::size_t image_res, const EncoderConfig& cfg,
                                                     std::size_t total_k);

// Share of in-box cells (union over boxes, pooled over scales) that are
// selected; empty when no cell center lies in any box.
std::optional<double> recall_eval(const SelectionSet& selection, const std::vector<Box>& boxes,
                                  std::size_t base_width, std::size_t base_height);

// round(fraction * cells) uniformly random cells per grid.
SelectionSet random_selection(const std::vector<GridSpec>& grids, double fraction, std::mt19937_64& rng);

struct ScalingRow {
  Regime regime = Regime::kWholeImage;
  SchedulePoint point;
  CostReport cost;
  std::optional<double> recall;
  std::optional<double> retrieval;
  std::string checkpoint;
  std::string checkpoint_hash;  // FNV-1a 64 of the file bytes, hex
  std::string status;           // ok | tokens-only | skipped: <reason>
};

struct ScalingOptions {
  // Costs only; no checkpoint is read.
  bool tokens_only = false;
  // Held-out records; each contributes its first captioned local region.
  std::vector<std::size_t> eval_records;
};

// One row per schedule point. A missing or mismatched checkpoint gives a
// skipped row instead of an error. `dataset` may be null in tokens-only mode.
std::vector<ScalingRow> run_scaling(const ScalingSchedule& schedule, const EncoderConfig& cfg,
                                    const std::filesystem::path& checkpoints, const Dataset* dataset,
                                    const ScalingOptions& options);

// regime,max_res,train_fraction,test_fraction,selected,hr_tokens,low_res_tokens,
// stage1_flops,aux_flops,stage3_flops,total_flops,recall,retrieval,checkpoint,checkpoint_hash,status
std::string scaling_csv(const std::vector<ScalingRow>& rows);

std::string file_hash(const std::filesystem::path& path);

}  // namespace ps3
