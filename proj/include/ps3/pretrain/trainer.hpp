#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ps3/datagen/dataset.hpp"
#include "ps3/encoder/checkpoint.hpp"
#include "ps3/encoder/model.hpp"
#include "ps3/pretrain/batch.hpp"
#include "ps3/pretrain/config.hpp"
#include "ps3/pretrain/losses.hpp"

namespace ps3 {

// A batch sample with its image pyramid loaded.
struct LoadedSample {
  BatchSample sample;
  const DatasetRecord* record = nullptr;
  ImagePyramid pyramid;
};

std::vector<LoadedSample> load_batch(const Dataset& dataset, const TrainBatch& batch, const EncoderConfig& cfg);

// Per-scale k for a local sample: allocate_k(select_k) over the ladder, or
// everything on the finest scale when multi-scale selection is off.
std::vector<std::size_t> local_k(const TrainConfig& cfg, const std::vector<GridSpec>& grids);

template <typename T>
struct LocalForward {
  Var<T> image_embedding;  // [1 x d], unit norm
  Var<T> text_embedding;   // [1 x d], unit norm
  ScoreVars<T> top_down;
  ScoreVars<T> bottom_up;
  SelectionSet selection;
  std::vector<bool> pooled;  // per selected token
};

// Local sample path: low-res and aux encoders, top-down (caption prompt) and
// bottom-up scores, patch selection (ground-truth map or predicted top-down
// map per cfg.designs), high-res encoding, then attention pooling over the
// selected tokens inside the box (all selected tokens when in-box pooling is
// off or no selected token lies in the box).
template <typename T>
LocalForward<T> local_forward(const Bound<T>& m, const LoadedSample& sample, const TrainConfig& cfg);

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> contrastive;
  Var<T> bce;   // top-down plus bottom-up, averaged over local samples
  Var<T> dice;  // same
};

// contrastive_weight * sigmoid loss over all samples + ce_weight * bce +
// dice_weight * dice. Global samples pool the low-res tokens with no mask.
template <typename T>
LossTerms<T> training_loss(const Bound<T>& m, const std::vector<LoadedSample>& samples, const TrainConfig& cfg);

// Decoupled weight decay with bias-corrected adaptive moments. The loss
// temperature and bias are not decayed.
class AdamW {
 public:
  explicit AdamW(const ParameterSet<float>& params);
  void step(ParameterSet<float>& params, const std::vector<Tensor<float>>& grads, const TrainConfig& cfg, double lr);

  std::size_t steps = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
};

// Linear warmup over warmup_steps, then constant.
double learning_rate_at(const TrainConfig& cfg, std::size_t step);

struct StepMetrics {
  double loss = 0, contrastive = 0, bce = 0, dice = 0;
  double lr = 0;
  double temperature = 0, bias = 0;
};

// One forward/backward pass and optimizer update. `step` is 1-based. Throws
// NumericError if any loss term is not finite, before touching parameters.
StepMetrics pretrain_step(Ps3Model<float>& model, AdamW& opt, const std::vector<LoadedSample>& samples,
                          const TrainConfig& cfg, std::size_t step);

struct EvalMetrics {
  double iou = 0;        // top-down selection vs box cells, k = in-box count
  double recall = 0;     // in-box cells selected at the training budget
  double retrieval = 0;  // caption -> region top-1 among groups of 8
  std::size_t regions = 0;
};

EvalMetrics evaluate(const Ps3Model<float>& model, const Dataset& dataset, const std::vector<std::size_t>& records,
                     const TrainConfig& cfg);

// Training split and held-out split (the last eval_records records).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_records(std::size_t n, const TrainConfig& cfg);

struct TrainResult {
  std::size_t steps = 0;
  EvalMetrics initial;
  EvalMetrics final_metrics;
  std::filesystem::path checkpoint;
};

// Files under `out`:
//   metrics.csv        step,loss,contrastive,bce,dice,lr,temperature,bias,iou,recall,retrieval
//                      (step 0 holds the untrained evaluation; evaluation
//                      columns are empty between evaluations)
//   train_config.json  the effective configuration
//   step_NNNNNN.ps3    checkpoints every checkpoint_every steps and at the end
//   latest.ps3         copy of the newest checkpoint
// Checkpoints carry optimizer moments ("opt.m.*", "opt.v.*") and the step
// ("train.step"). With resume, training continues from latest.ps3 and the
// metrics rows after its step are dropped, so an interrupted run finishes
// with the same files as an uninterrupted one. Batches depend only on (seed,
// step). `stop_after` ends the run early after that many steps (for tests).
TrainResult train_loop(const Dataset& dataset, const TrainConfig& cfg, const std::filesystem::path& out,
                       bool resume = false, std::ostream* log = nullptr,
                       std::optional<std::size_t> stop_after = std::nullopt);

// Fresh model with the loss temperature/bias set from the training config.
Ps3Model<float> initial_model(const TrainConfig& cfg);

}  // namespace ps3
