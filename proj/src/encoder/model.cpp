#include "ps3/encoder/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "ps3/core/errors.hpp"

namespace ps3 {

template <typename T>
void ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ArgumentError("parameter set: duplicate name " + name);
  index_[name] = names_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(value));
}

template <typename T>
Tensor<T>& ParameterSet<T>::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("parameter set: no tensor named " + name);
  return tensors_[it->second];
}

template <typename T>
const Tensor<T>& ParameterSet<T>::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("parameter set: no tensor named " + name);
  return tensors_[it->second];
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

namespace {

enum class Init { kLinear, kZero, kOne, kSmall, kTPrime, kBias };

struct Entry {
  std::string name;
  Shape shape;
  Init init;
  std::size_t fan_in = 1;
};

void add_linear(std::vector<Entry>& out, const std::string& name, std::size_t in, std::size_t outd) {
  out.push_back({name + ".w", {in, outd}, Init::kLinear, in});
  out.push_back({name + ".b", {outd}, Init::kZero});
}

void add_norm(std::vector<Entry>& out, const std::string& name, std::size_t d) {
  out.push_back({name + ".g", {d}, Init::kOne});
  out.push_back({name + ".b", {d}, Init::kZero});
}

void add_block(std::vector<Entry>& out, const std::string& pre, std::size_t d, std::size_t mlp) {
  add_norm(out, pre + ".ln1", d);
  add_linear(out, pre + ".attn.q", d, d);
  // A key bias shifts every logit of a query equally, so softmax ignores it.
  out.push_back({pre + ".attn.k.w", {d, d}, Init::kLinear, d});
  add_linear(out, pre + ".attn.v", d, d);
  add_linear(out, pre + ".attn.o", d, d);
  add_norm(out, pre + ".ln2", d);
  add_linear(out, pre + ".mlp.fc1", d, mlp);
  add_linear(out, pre + ".mlp.fc2", mlp, d);
}

std::vector<Entry> layout_entries(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  std::vector<Entry> e;
  add_linear(e, "patch", cfg.patch_side * cfg.patch_side * 3, d);
  e.push_back({"pos.low", {cfg.low_res_grid().cells(), d}, Init::kSmall});
  e.push_back({"pos.scale", {cfg.num_scales(), d}, Init::kSmall});
  for (std::size_t l = 0; l < cfg.num_layers; ++l) add_block(e, "vit." + std::to_string(l), d, cfg.mlp_dim);
  add_norm(e, "vit.ln", d);
  std::size_t cin = 3;
  for (std::size_t b = 0; b < cfg.aux_blocks; ++b) {
    const std::string pre = "aux." + std::to_string(b);
    e.push_back({pre + ".dw", {3, 3, cin}, Init::kLinear, 9});
    add_linear(e, pre + ".pw", cin, cfg.aux_channels[b]);
    add_norm(e, pre + ".ln", cfg.aux_channels[b]);
    cin = cfg.aux_channels[b];
  }
  add_linear(e, "aux.proj", cin, d);
  e.push_back({"pool.q", {1, d}, Init::kLinear, d});
  e.push_back({"pool.k.w", {d, d}, Init::kLinear, d});
  add_linear(e, "pool.v", d, d);
  e.push_back({"text.tok", {cfg.vocab_size, d}, Init::kSmall});
  e.push_back({"text.pos", {cfg.text_max_len, d}, Init::kSmall});
  for (std::size_t l = 0; l < cfg.text_layers; ++l) add_block(e, "text." + std::to_string(l), d, cfg.mlp_dim);
  add_norm(e, "text.ln", d);
  add_linear(e, "text.proj", d, d);
  e.push_back({"prompt.bottom_up", {1, d}, Init::kSmall});
  e.push_back({"loss.t_prime", {}, Init::kTPrime});
  e.push_back({"loss.bias", {}, Init::kBias});
  return e;
}

template <typename T>
Var<T> lin(const Bound<T>& m, const std::string& name, Var<T> x) {
  return linear(x, m(name + ".w"), m(name + ".b"));
}

template <typename T>
Var<T> norm(const Bound<T>& m, const std::string& name, Var<T> x) {
  return layer_norm(x, m(name + ".g"), m(name + ".b"));
}

template <typename T>
struct BlockOut {
  Var<T> x, k, v;
};

// Pre-norm transformer block. When ctx_k/ctx_v are given, they are prepended
// to this block's keys and values; queries come only from x.
template <typename T>
BlockOut<T> block(const Bound<T>& m, const std::string& pre, Var<T> x, const Var<T>* ctx_k = nullptr,
                  const Var<T>* ctx_v = nullptr) {
  Var<T> h = norm(m, pre + ".ln1", x);
  Var<T> q = lin(m, pre + ".attn.q", h);
  Var<T> k = matmul(h, m(pre + ".attn.k.w"));
  Var<T> v = lin(m, pre + ".attn.v", h);
  Var<T> kk = ctx_k ? concat_rows(*ctx_k, k) : k;
  Var<T> vv = ctx_v ? concat_rows(*ctx_v, v) : v;
  Var<T> a = attention(q, kk, vv, m.cfg().num_heads);
  x = add(x, lin(m, pre + ".attn.o", a));
  Var<T> f = lin(m, pre + ".mlp.fc2", gelu(lin(m, pre + ".mlp.fc1", norm(m, pre + ".ln2", x))));
  return {add(x, f), k, v};
}

// [h x w x d] image tensor with values mapped to [-1, 1].
template <typename T>
Tensor<T> image_tensor(const ImageF& img) {
  Tensor<T> t({img.height, img.width, 3});
  for (std::size_t i = 0; i < img.rgb.size(); ++i) t[i] = static_cast<T>((img.rgb[i] - 0.5f) * 2.0f);
  return t;
}

template <typename T>
Taps<T> cast_taps(const Taps<double>& taps) {
  Taps<T> out(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i)
    for (const auto& [row, w] : taps[i]) out[i].emplace_back(row, static_cast<T>(w));
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& e : layout_entries(cfg)) out.emplace_back(e.name, e.shape);
  return out;
}

template <typename T>
Ps3Model<T>::Ps3Model(const EncoderConfig& config) : cfg(config) {
  std::mt19937_64 rng(cfg.seed);
  for (const auto& e : layout_entries(cfg)) {
    Tensor<T> t(e.shape);
    double sigma = 0;
    switch (e.init) {
      case Init::kLinear: sigma = 1.0 / std::sqrt(static_cast<double>(e.fan_in)); break;
      case Init::kSmall: sigma = 0.02; break;
      case Init::kZero: break;
      case Init::kOne: std::fill(t.values.begin(), t.values.end(), T(1)); break;
      case Init::kTPrime: t[0] = static_cast<T>(std::log(10.0)); break;
      case Init::kBias: t[0] = T(-10); break;
    }
    if (sigma > 0) {
      std::normal_distribution<double> nd(0.0, sigma);
      for (auto& v : t.values) v = static_cast<T>(nd(rng));
    }
    params.add(e.name, std::move(t));
  }
}

template <typename T>
Ps3Model<T>::Ps3Model(const EncoderConfig& config, ParameterSet<T> values) : cfg(config) {
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    if (!values.contains(name)) throw ConfigError("model: missing parameter " + name);
    Tensor<T>& t = values[name];
    if (t.shape != shape)
      throw ConfigError("model: parameter " + name + " has shape " + shape_string(t.shape) + ", expected " +
                        shape_string(shape));
    params.add(name, std::move(t));
  }
}

template <typename T>
Bound<T>::Bound(const Ps3Model<T>& model, Tape<T>& tape, bool requires_grad) : cfg_(model.cfg), tape_(&tape) {
  names_ = model.params.names();
  for (std::size_t i = 0; i < names_.size(); ++i) {
    index_[names_[i]] = i;
    leaves_.push_back(tape.leaf(model.params.tensors()[i], requires_grad));
  }
}

template <typename T>
Bound<T>::Bound(const EncoderConfig& cfg, const std::vector<Var<T>>& leaves) : cfg_(cfg), leaves_(leaves) {
  const auto layout = parameter_layout(cfg);
  if (leaves.size() != layout.size()) throw DimensionError("bound: wrong number of leaves");
  tape_ = leaves.empty() ? nullptr : leaves[0].tape;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (leaves[i].shape() != layout[i].second) throw DimensionError("bound: wrong shape for " + layout[i].first);
    names_.push_back(layout[i].first);
    index_[layout[i].first] = i;
  }
}

template <typename T>
Var<T> Bound<T>::operator()(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("model: no parameter named " + name);
  return leaves_[it->second];
}

template <typename T>
LowResOutput<T> encode_low_res(const Bound<T>& m, const ImagePyramid& pyramid) {
  const EncoderConfig& cfg = m.cfg();
  check_pyramid(pyramid, cfg);
  Tape<T>& tape = m.tape();
  Var<T> x = lin(m, "patch", tape.constant(all_patch_rows<T>(pyramid.low_res, cfg.patch_side)));
  x = add(x, m("pos.low"));
  LowResOutput<T> out;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    BlockOut<T> b = block(m, "vit." + std::to_string(l), x);
    out.cache.keys.push_back(b.k);
    out.cache.values.push_back(b.v);
    x = b.x;
  }
  out.tokens = norm(m, "vit.ln", x);
  return out;
}

template <typename T>
Var<T> aux_highres_encode(const Bound<T>& m, const ImagePyramid& pyramid) {
  const EncoderConfig& cfg = m.cfg();
  check_pyramid(pyramid, cfg);
  const ImageF& img = pyramid.scales.at(cfg.aux_scale_index());
  Var<T> x = m.tape().constant(image_tensor<T>(img));
  std::size_t h = img.height, w = img.width;
  for (std::size_t b = 0; b < cfg.aux_blocks; ++b) {
    const std::string pre = "aux." + std::to_string(b);
    const std::size_t c = cfg.aux_channels[b];
    // The stride-2 downsample happens in the depthwise conv, so the pointwise
    // layer and activation run at the reduced size.
    x = depthwise_conv2d(x, m(pre + ".dw"), 2, 1, Padding::kReplicate);
    h /= 2;
    w /= 2;
    x = gelu(lin(m, pre + ".pw", reshape(x, {h * w, x.shape()[2]})));
    x = reshape(norm(m, pre + ".ln", x), {h, w, c});
  }
  x = lin(m, "aux.proj", reshape(x, {h * w, x.shape()[2]}));
  return reshape(x, {h, w, cfg.embed_dim});
}

template <typename T>
ScoreMap ScoreVars<T>::to_score_map() const {
  ScoreMap s;
  s.grids = grids;
  s.provenance = Provenance::kPredicted;
  for (const auto& v : maps) {
    const auto& vals = v.value().values;
    s.scores.emplace_back(vals.begin(), vals.end());
  }
  s.degenerate.assign(grids.size(), false);
  return s;
}

Taps<double> gaussian_taps(const GridSpec& grid, double sigma) {
  if (sigma <= 0) throw ArgumentError("gaussian_taps: sigma must be positive");
  const long radius = static_cast<long>(std::ceil(3 * sigma));
  const long rows = static_cast<long>(grid.rows), cols = static_cast<long>(grid.cols);
  Taps<double> taps(grid.cells());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      auto& t = taps[static_cast<std::size_t>(r * cols + c)];
      double total = 0;
      for (long dr = -radius; dr <= radius; ++dr)
        for (long dc = -radius; dc <= radius; ++dc) {
          const double w = std::exp(-static_cast<double>(dr * dr + dc * dc) / (2 * sigma * sigma));
          const long sr = std::clamp(r + dr, 0L, rows - 1), sc = std::clamp(c + dc, 0L, cols - 1);
          t.emplace_back(static_cast<std::size_t>(sr * cols + sc), w);
          total += w;
        }
      for (auto& p : t) p.second /= total;
    }
  return taps;
}

template <typename T>
ScoreVars<T> selection_score(const Bound<T>& m, Var<T> tokens, Var<T> aux, Var<T> prompt,
                             const std::vector<GridSpec>& target_grids) {
  const EncoderConfig& cfg = m.cfg();
  const std::size_t d = cfg.embed_dim;
  const GridSpec lg = cfg.low_res_grid();
  if (tokens.shape() != Shape{lg.cells(), d}) throw DimensionError("selection_score: low-res tokens " + shape_string(tokens.shape()));
  if (aux.value().rank() != 3 || aux.shape()[2] != d) throw DimensionError("selection_score: aux features " + shape_string(aux.shape()));
  if (prompt.shape() != Shape{1, d}) throw DimensionError("selection_score: prompt " + shape_string(prompt.shape()));
  const std::size_t ah = aux.shape()[0], aw = aux.shape()[1];

  Var<T> pn = transpose(l2_normalize(prompt));
  Var<T> low = reshape(matmul(l2_normalize(tokens), pn), {lg.rows, lg.cols, 1});
  Var<T> high = reshape(matmul(l2_normalize(reshape(aux, {ah * aw, d})), pn), {ah, aw, 1});

  ScoreVars<T> out;
  out.grids = target_grids;
  for (const GridSpec& g : target_grids) {
    Var<T> s = scale(add(interpolate_bilinear(low, g.rows, g.cols), interpolate_bilinear(high, g.rows, g.cols)), T(0.5));
    if (cfg.smoothing_sigma > 0) {
      s = weighted_gather(reshape(s, {g.cells(), 1}), cast_taps<T>(gaussian_taps(g, cfg.smoothing_sigma)));
      s = reshape(s, {g.rows, g.cols, 1});
    }
    out.maps.push_back(s);
  }
  return out;
}

template <typename T>
Var<T> bottom_up_prompt(const Bound<T>& m) {
  return m("prompt.bottom_up");
}

template <typename T>
Var<T> scale_positional_embedding(const Bound<T>& m, const SelectionSet& sel, bool use_offset) {
  const GridSpec lg = m.cfg().low_res_grid();
  Taps<T> taps;
  std::vector<std::size_t> scale_ids;
  for (std::size_t s = 0; s < sel.num_scales(); ++s) {
    const GridSpec& g = sel.grids[s];
    for (std::size_t idx : sel.indices[s]) {
      const std::size_t r = idx / g.cols, c = idx % g.cols;
      const LinearTaps ty = linear_taps(half_pixel_coordinate(r, lg.rows, g.rows), lg.rows);
      const LinearTaps tx = linear_taps(half_pixel_coordinate(c, lg.cols, g.cols), lg.cols);
      const T wy = static_cast<T>(ty.w_hi), wx = static_cast<T>(tx.w_hi);
      taps.push_back({{ty.lo * lg.cols + tx.lo, (1 - wy) * (1 - wx)},
                      {ty.lo * lg.cols + tx.hi, (1 - wy) * wx},
                      {ty.hi * lg.cols + tx.lo, wy * (1 - wx)},
                      {ty.hi * lg.cols + tx.hi, wy * wx}});
      scale_ids.push_back(s);
    }
  }
  Var<T> pe = weighted_gather(m("pos.low"), taps);
  if (use_offset) pe = add(pe, gather_rows(m("pos.scale"), scale_ids));
  return pe;
}

template <typename T>
Var<T> encode_high_res(const Bound<T>& m, const ImagePyramid& pyramid, const SelectionSet& sel,
                       const KVCache<T>& cache, const HighResOptions& options) {
  const EncoderConfig& cfg = m.cfg();
  check_pyramid(pyramid, cfg);
  if (sel.num_scales() != cfg.num_scales()) throw DimensionError("encode_high_res: selection has wrong scale count");
  for (std::size_t s = 0; s < cfg.num_scales(); ++s)
    if (!(sel.grids[s] == pyramid.grids[s])) throw DimensionError("encode_high_res: selection grid mismatch");
  if (options.use_kv_cache && cache.layers() != cfg.num_layers)
    throw ConfigError("encode_high_res: cache has " + std::to_string(cache.layers()) + " layers, model has " +
                      std::to_string(cfg.num_layers));
  const std::size_t n = sel.total();
  if (n == 0) return m.tape().constant(Tensor<T>({0, cfg.embed_dim}));

  const std::size_t row_len = cfg.patch_side * cfg.patch_side * 3;
  Tensor<T> rows({n, row_len});
  std::size_t at = 0;
  for (std::size_t s = 0; s < cfg.num_scales(); ++s) {
    Tensor<T> part = patch_rows<T>(pyramid.scales[s], cfg.patch_side, sel.indices[s]);
    std::copy(part.values.begin(), part.values.end(), rows.values.begin() + static_cast<std::ptrdiff_t>(at));
    at += part.size();
  }
  Var<T> x = lin(m, "patch", m.tape().constant(std::move(rows)));
  x = add(x, scale_positional_embedding(m, sel, options.use_scale_pe));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string pre = "vit." + std::to_string(l);
    if (options.use_kv_cache) {
      x = block(m, pre, x, &cache.keys[l], &cache.values[l]).x;
    } else {
      x = block(m, pre, x).x;
    }
  }
  return norm(m, "vit.ln", x);
}

template <typename T>
Var<T> encode_multi_round(const Bound<T>& m, const ImagePyramid& pyramid, const LowResOutput<T>& low,
                          const ScoreMap& score, std::size_t total_k, MultiRoundOutput* plan,
                          const HighResOptions& options) {
  const EncoderConfig& cfg = m.cfg();
  std::vector<SelectionSet> rounds =
      plan_rounds(score, allocate_k(static_cast<std::int64_t>(total_k), score.grids), cfg.per_round_cap);
  Var<T> out = m.tape().constant(Tensor<T>({0, cfg.embed_dim}));
  bool first = true;
  for (const auto& sel : rounds) {
    Var<T> y = encode_high_res(m, pyramid, sel, low.cache, options);
    out = first ? y : concat_rows(out, y);
    first = false;
  }
  if (plan) plan->rounds = std::move(rounds);
  return out;
}

template <typename T>
Var<T> attention_pool(const Bound<T>& m, Var<T> tokens, const std::vector<bool>& keep) {
  if (tokens.value().rank() != 2 || keep.size() != tokens.shape()[0])
    throw DimensionError("attention_pool: mask length does not match token count");
  if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
    throw ArgumentError("attention_pool: no token is kept");
  Var<T> k = matmul(tokens, m("pool.k.w"));
  Var<T> v = lin(m, "pool.v", tokens);
  return attention(m("pool.q"), k, v, m.cfg().num_heads, keep);
}

template <typename T>
Var<T> text_encode(const Bound<T>& m, const std::vector<std::size_t>& caption) {
  const EncoderConfig& cfg = m.cfg();
  if (caption.empty()) throw ArgumentError("text_encode: empty caption");
  if (caption.size() > cfg.text_max_len)
    throw ArgumentError("text_encode: caption of " + std::to_string(caption.size()) + " tokens exceeds " +
                        std::to_string(cfg.text_max_len));
  for (std::size_t id : caption)
    if (id >= cfg.vocab_size) throw ArgumentError("text_encode: token id " + std::to_string(id) + " outside vocabulary");
  std::vector<std::size_t> positions(caption.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var<T> x = add(embedding_lookup(m("text.tok"), caption), gather_rows(m("text.pos"), positions));
  for (std::size_t l = 0; l < cfg.text_layers; ++l) x = block(m, "text." + std::to_string(l), x).x;
  x = mean_rows(norm(m, "text.ln", x));
  return l2_normalize(lin(m, "text.proj", x));
}

#define PS3_INSTANTIATE_MODEL(T)                                                                                  \
  template class ParameterSet<T>;                                                                                 \
  template struct Ps3Model<T>;                                                                                    \
  template class Bound<T>;                                                                                        \
  template struct ScoreVars<T>;                                                                                   \
  template LowResOutput<T> encode_low_res(const Bound<T>&, const ImagePyramid&);                                  \
  template Var<T> aux_highres_encode(const Bound<T>&, const ImagePyramid&);                                       \
  template ScoreVars<T> selection_score(const Bound<T>&, Var<T>, Var<T>, Var<T>, const std::vector<GridSpec>&);   \
  template Var<T> bottom_up_prompt(const Bound<T>&);                                                              \
  template Var<T> scale_positional_embedding(const Bound<T>&, const SelectionSet&, bool);                         \
  template Var<T> encode_high_res(const Bound<T>&, const ImagePyramid&, const SelectionSet&, const KVCache<T>&,   \
                                  const HighResOptions&);                                                         \
  template Var<T> encode_multi_round(const Bound<T>&, const ImagePyramid&, const LowResOutput<T>&,                \
                                     const ScoreMap&, std::size_t, MultiRoundOutput*, const HighResOptions&);     \
  template Var<T> attention_pool(const Bound<T>&, Var<T>, const std::vector<bool>&);                              \
  template Var<T> text_encode(const Bound<T>&, const std::vector<std::size_t>&);

PS3_INSTANTIATE_MODEL(float)
PS3_INSTANTIATE_MODEL(double)

}  // namespace ps3
