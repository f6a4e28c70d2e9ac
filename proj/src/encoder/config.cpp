#include "ps3/encoder/config.hpp"

#include "json.hpp"

#include "ps3/core/errors.hpp"

namespace ps3 {

std::vector<GridSpec> EncoderConfig::scale_grids() const {
  std::vector<GridSpec> g;
  for (std::size_t s = 0; s < num_scales(); ++s) g.push_back(scale_grid(s));
  return g;
}

std::size_t EncoderConfig::aux_grid_side() const {
  std::size_t side = num_scales() ? scale_side(aux_scale_index()) : low_res_side;
  for (std::size_t b = 0; b < aux_blocks; ++b) side /= 2;
  return side;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (patch_side == 0) fail("patch_side", "must be positive");
  if (low_res_side == 0 || low_res_side % patch_side) fail("low_res_side", "must be a positive multiple of patch_side");
  if (scale_multipliers.empty()) fail("scale_multipliers", "needs at least one scale");
  for (std::size_t s = 0; s < scale_multipliers.size(); ++s) {
    if (scale_multipliers[s] == 0) fail("scale_multipliers", "must be positive");
    if (s && scale_multipliers[s] <= scale_multipliers[s - 1]) fail("scale_multipliers", "must be strictly increasing");
    if (scale_side(s) % patch_side) fail("scale_multipliers", "every scale side must be divisible by patch_side");
  }
  if (embed_dim == 0) fail("embed_dim", "must be positive");
  if (num_heads == 0 || embed_dim % num_heads) fail("num_heads", "must divide embed_dim");
  if (num_layers == 0) fail("num_layers", "must be positive");
  if (mlp_dim == 0) fail("mlp_dim", "must be positive");
  if (aux_channels.size() != aux_blocks) fail("aux_channels", "needs one entry per aux block");
  {
    std::size_t side = scale_side(aux_scale_index());
    for (std::size_t b = 0; b < aux_blocks; ++b) {
      if (side % 2) fail("aux_blocks", "aux input side must stay even through every downsample");
      side /= 2;
    }
  }
  if (vocab_size == 0) fail("vocab_size", "must be positive");
  if (text_max_len == 0) fail("text_max_len", "must be positive");
  if (per_round_cap == 0) fail("per_round_cap", "must be positive");
  if (smoothing_sigma < 0) fail("smoothing_sigma", "must be non-negative");
  if (!(dynamic_threshold_ratio > 0 && dynamic_threshold_ratio <= 1)) fail("dynamic_threshold_ratio", "must be in (0, 1]");
}

EncoderConfig EncoderConfig::truncated(std::size_t max) const {
  EncoderConfig out = *this;
  out.scale_multipliers.clear();
  for (std::size_t s = 0; s < num_scales(); ++s)
    if (scale_side(s) <= max) out.scale_multipliers.push_back(scale_multipliers[s]);
  if (out.scale_multipliers.empty()) throw ConfigError("max_res: no scale at or below " + std::to_string(max));
  return out;
}

EncoderConfig desk_profile() { return EncoderConfig{}; }

EncoderConfig paper_profile() {
  EncoderConfig c;
  c.low_res_side = 378;
  c.patch_side = 14;
  c.scale_multipliers = {2, 4, 10};
  c.embed_dim = 1152;
  c.num_heads = 16;
  c.num_layers = 27;
  c.mlp_dim = 4304;
  c.aux_blocks = 3;
  c.aux_channels = {96, 192, 384};
  c.vocab_size = 32000;
  c.text_layers = 27;
  c.text_max_len = 64;
  c.per_round_cap = 2560;
  return c;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"low_res_side", c.low_res_side},
                     {"patch_side", c.patch_side},
                     {"scale_multipliers", c.scale_multipliers},
                     {"embed_dim", c.embed_dim},
                     {"num_heads", c.num_heads},
                     {"num_layers", c.num_layers},
                     {"mlp_dim", c.mlp_dim},
                     {"aux_blocks", c.aux_blocks},
                     {"aux_channels", c.aux_channels},
                     {"vocab_size", c.vocab_size},
                     {"text_layers", c.text_layers},
                     {"text_max_len", c.text_max_len},
                     {"per_round_cap", c.per_round_cap},
                     {"smoothing_sigma", c.smoothing_sigma},
                     {"dynamic_threshold_ratio", c.dynamic_threshold_ratio},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  if (!j.is_object()) throw ConfigError("encoder: expected an object");
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(key) + ": wrong type");
    }
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"low_res_side", "patch_side",   "scale_multipliers", "embed_dim",
                                  "num_heads",    "num_layers",   "mlp_dim",           "aux_blocks",
                                  "aux_channels", "vocab_size",   "text_layers",       "text_max_len",
                                  "per_round_cap", "smoothing_sigma", "dynamic_threshold_ratio", "seed"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(it.key() + ": unknown encoder field");
  }
  read("low_res_side", c.low_res_side);
  read("patch_side", c.patch_side);
  read("scale_multipliers", c.scale_multipliers);
  read("embed_dim", c.embed_dim);
  read("num_heads", c.num_heads);
  read("num_layers", c.num_layers);
  read("mlp_dim", c.mlp_dim);
  read("aux_blocks", c.aux_blocks);
  read("aux_channels", c.aux_channels);
  read("vocab_size", c.vocab_size);
  read("text_layers", c.text_layers);
  read("text_max_len", c.text_max_len);
  read("per_round_cap", c.per_round_cap);
  read("smoothing_sigma", c.smoothing_sigma);
  read("dynamic_threshold_ratio", c.dynamic_threshold_ratio);
  read("seed", c.seed);
}

}  // namespace ps3
