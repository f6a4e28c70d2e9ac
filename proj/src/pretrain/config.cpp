#include "ps3/pretrain/config.hpp"

#include <algorithm>
#include <cmath>

#include "ps3/core/errors.hpp"

namespace ps3 {

namespace {

bool* design_flag(Designs& d, const std::string& name) {
  if (name == "gt-selection") return &d.gt_selection;
  if (name == "inbox-pool") return &d.inbox_pool;
  if (name == "mix-global") return &d.mix_global;
  if (name == "intra-image") return &d.avoid_intra_image;
  if (name == "multi-scale") return &d.multi_scale;
  if (name == "scale-pe") return &d.scale_pe;
  if (name == "kv-cache") return &d.kv_cache;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& design_names() {
  static const std::vector<std::string> names{"gt-selection", "inbox-pool",  "mix-global", "intra-image",
                                              "multi-scale",  "scale-pe",    "kv-cache"};
  return names;
}

void disable_design(Designs& designs, const std::string& name) {
  bool* flag = design_flag(designs, name);
  if (!flag) {
    std::string all;
    for (const auto& n : design_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("ablate: unknown design '" + name + "' (known: " + all + ")");
  }
  *flag = false;
}

std::size_t TrainConfig::steps_per_epoch() const { return (samples_per_epoch + batch_size - 1) / batch_size; }

std::size_t TrainConfig::total_steps() const { return epochs * steps_per_epoch(); }

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  encoder.validate();
  if (epochs == 0) fail("epochs", "must be positive");
  if (samples_per_epoch == 0) fail("samples_per_epoch", "must be positive");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be finite and >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) fail("beta2", "must lie in [0, 1)");
  if (!(weight_decay >= 0)) fail("weight_decay", "must be >= 0");
  if (!(global_ratio >= 0 && global_ratio <= 1)) fail("global_ratio", "must lie in [0, 1]");
  if (!(contrastive_weight >= 0)) fail("contrastive_weight", "must be >= 0");
  if (!(ce_weight >= 0)) fail("ce_weight", "must be >= 0");
  if (!(dice_weight >= 0)) fail("dice_weight", "must be >= 0");
  if (!std::isfinite(t_prime_init)) fail("t_prime_init", "must be finite");
  if (!std::isfinite(bias_init)) fail("bias_init", "must be finite");
  if (select_k == 0) fail("select_k", "must be positive");
  if (select_k > encoder.per_round_cap) fail("select_k", "exceeds the encoder's per_round_cap");
  std::size_t cells = 0;
  for (const auto& g : encoder.scale_grids()) cells += g.cells();
  if (select_k > cells) fail("select_k", "exceeds the number of high-res cells");
  if (eval_every == 0) fail("eval_every", "must be positive");
  if (checkpoint_every == 0) fail("checkpoint_every", "must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  nlohmann::json ablated = nlohmann::json::array();
  for (const auto& name : design_names()) {
    Designs copy = c.designs;
    if (!*design_flag(copy, name)) ablated.push_back(name);
  }
  j = nlohmann::json{{"encoder", c.encoder},
                     {"epochs", c.epochs},
                     {"samples_per_epoch", c.samples_per_epoch},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"warmup_steps", c.warmup_steps},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"weight_decay", c.weight_decay},
                     {"global_ratio", c.global_ratio},
                     {"contrastive_weight", c.contrastive_weight},
                     {"ce_weight", c.ce_weight},
                     {"dice_weight", c.dice_weight},
                     {"t_prime_init", c.t_prime_init},
                     {"bias_init", c.bias_init},
                     {"select_k", c.select_k},
                     {"eval_records", c.eval_records},
                     {"eval_every", c.eval_every},
                     {"checkpoint_every", c.checkpoint_every},
                     {"seed", c.seed},
                     {"ablate", ablated}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  static const char* known[] = {"encoder",      "epochs",       "samples_per_epoch", "batch_size",
                                "learning_rate", "warmup_steps", "beta1",             "beta2",
                                "weight_decay", "global_ratio", "contrastive_weight", "ce_weight",
                                "dice_weight",  "t_prime_init", "bias_init",         "select_k",
                                "eval_records", "eval_every",   "checkpoint_every",  "seed",
                                "ablate"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(it.key() + ": unknown training field");
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(key) + ": wrong type");
    }
  };
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  read("epochs", c.epochs);
  read("samples_per_epoch", c.samples_per_epoch);
  read("batch_size", c.batch_size);
  read("learning_rate", c.learning_rate);
  read("warmup_steps", c.warmup_steps);
  read("beta1", c.beta1);
  read("beta2", c.beta2);
  read("weight_decay", c.weight_decay);
  read("global_ratio", c.global_ratio);
  read("contrastive_weight", c.contrastive_weight);
  read("ce_weight", c.ce_weight);
  read("dice_weight", c.dice_weight);
  read("t_prime_init", c.t_prime_init);
  read("bias_init", c.bias_init);
  read("select_k", c.select_k);
  read("eval_records", c.eval_records);
  read("eval_every", c.eval_every);
  read("checkpoint_every", c.checkpoint_every);
  read("seed", c.seed);
  if (j.contains("ablate")) {
    std::vector<std::string> names;
    read("ablate", names);
    c.designs = Designs{};
    for (const auto& n : names) disable_design(c.designs, n);
  }
}

}  // namespace ps3
