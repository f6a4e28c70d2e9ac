#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "ps3/core/ops.hpp"
#include "ps3/encoder/config.hpp"
#include "ps3/encoder/pyramid.hpp"
#include "ps3/encoder/selection.hpp"

namespace ps3 {

// Named tensors in insertion order.
template <typename T>
class ParameterSet {
 public:
  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<T>& operator[](const std::string& name);
  const Tensor<T>& operator[](const std::string& name) const;
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Image tower, aux encoder, pooling head, text tower, bottom-up prompt and the
// sigmoid-loss temperature/bias.
template <typename T>
struct Ps3Model {
  EncoderConfig cfg;
  ParameterSet<T> params;

  // Random initialization from cfg.seed.
  explicit Ps3Model(const EncoderConfig& config);
  // Takes existing tensors; names and shapes must match the config's layout.
  Ps3Model(const EncoderConfig& config, ParameterSet<T> values);

  template <typename U>
  Ps3Model<U> cast() const {
    ParameterSet<U> out;
    for (std::size_t i = 0; i < params.size(); ++i) out.add(params.names()[i], tensor_cast<U>(params.tensors()[i]));
    return Ps3Model<U>(cfg, std::move(out));
  }
};

// Parameter layout (names and shapes) implied by a config.
std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& cfg);

// Model parameters placed on a tape as leaves.
template <typename T>
class Bound {
 public:
  Bound(const Ps3Model<T>& model, Tape<T>& tape, bool requires_grad);
  // Binds caller-owned leaves, in parameter_layout order.
  Bound(const EncoderConfig& cfg, const std::vector<Var<T>>& leaves);

  Var<T> operator()(const std::string& name) const;
  const EncoderConfig& cfg() const { return cfg_; }
  Tape<T>& tape() const { return *tape_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Var<T>>& leaves() const { return leaves_; }

 private:
  EncoderConfig cfg_;
  Tape<T>* tape_;
  std::vector<std::string> names_;
  std::vector<Var<T>> leaves_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-layer keys and values of the low-res tokens, each [n_lowres x d].
template <typename T>
struct KVCache {
  std::vector<Var<T>> keys;
  std::vector<Var<T>> values;
  std::size_t layers() const { return keys.size(); }
};

template <typename T>
struct LowResOutput {
  Var<T> tokens;  // [n x d]
  KVCache<T> cache;
};

// Stage 1: plain ViT over the low-res patches, capturing K and V per layer.
template <typename T>
LowResOutput<T> encode_low_res(const Bound<T>& m, const ImagePyramid& pyramid);

// Light convolutional encoder over the aux scale image; [h' x w' x d].
template <typename T>
Var<T> aux_highres_encode(const Bound<T>& m, const ImagePyramid& pyramid);

// Differentiable selection scores, one [rows x cols x 1] map per target grid.
template <typename T>
struct ScoreVars {
  std::vector<GridSpec> grids;
  std::vector<Var<T>> maps;
  ScoreMap to_score_map() const;
};

// Stage 2: cosine of low-res tokens and aux features with the prompt [1 x d],
// each interpolated to every target grid and averaged; then optional Gaussian
// smoothing (cfg.smoothing_sigma, grid cells, clamp-to-edge).
template <typename T>
ScoreVars<T> selection_score(const Bound<T>& m, Var<T> lowres_tokens, Var<T> aux_features, Var<T> prompt,
                             const std::vector<GridSpec>& target_grids);

// Learned bottom-up prompt [1 x d].
template <typename T>
Var<T> bottom_up_prompt(const Bound<T>& m);

// Positional embeddings [sum k x d] for the selected patches in (scale, index)
// order: low-res table interpolated at each patch center, plus the scale's
// offset vector when use_offset is set.
template <typename T>
Var<T> scale_positional_embedding(const Bound<T>& m, const SelectionSet& selection, bool use_offset = true);

struct HighResOptions {
  bool use_kv_cache = true;
  bool use_scale_pe = true;
};

// Stage 3: selected patches of every scale through the shared transformer,
// attending to [cached low-res K,V ; high-res K,V] at each layer.
// Output rows follow (scale, index) order; an empty selection gives [0 x d].
template <typename T>
Var<T> encode_high_res(const Bound<T>& m, const ImagePyramid& pyramid, const SelectionSet& selection,
                       const KVCache<T>& cache, const HighResOptions& options = {});

struct MultiRoundOutput {
  std::vector<SelectionSet> rounds;
};

// Repeated Stage 3 beyond the per-round cap. Rounds share only the low-res
// cache; outputs are concatenated in (round, scale, index) order.
template <typename T>
Var<T> encode_multi_round(const Bound<T>& m, const ImagePyramid& pyramid, const LowResOutput<T>& low,
                          const ScoreMap& score, std::size_t total_k, MultiRoundOutput* plan = nullptr,
                          const HighResOptions& options = {});

// Single learned query attending over the kept tokens; returns [1 x d].
template <typename T>
Var<T> attention_pool(const Bound<T>& m, Var<T> tokens, const std::vector<bool>& keep);

// Unit-norm caption embedding [1 x d].
template <typename T>
Var<T> text_encode(const Bound<T>& m, const std::vector<std::size_t>& caption);

// Gaussian smoothing taps over a grid, normalized per output cell.
Taps<double> gaussian_taps(const GridSpec& grid, double sigma);

}  // namespace ps3
