#include "ps3/harness/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ps3/core/errors.hpp"
#include "ps3/encoder/checkpoint.hpp"
#include "ps3/encoder/model.hpp"
#include "ps3/pretrain/batch.hpp"

namespace ps3 {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<Regime, const char*> kRegimes[] = {{Regime::kWholeImage, "whole-image"},
                                                       {Regime::kConstantCost, "constant-cost"},
                                                       {Regime::kConstantRes, "constant-res"},
                                                       {Regime::kTestTime, "test-time"}};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::size_t ladder_cells(const EncoderConfig& cfg) {
  std::size_t n = 0;
  for (const GridSpec& g : cfg.scale_grids()) n += g.cells();
  return n;
}

[[noreturn]] void bad(const std::string& what) { throw ConfigError("schedule: " + what); }

}  // namespace

const char* to_string(Regime r) {
  for (const auto& [k, name] : kRegimes)
    if (k == r) return name;
  return "?";
}

Regime regime_from_string(const std::string& s) {
  std::string all;
  for (const auto& [k, name] : kRegimes) {
    if (s == name) return k;
    all += all.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("regime: unknown '" + s + "' (known: " + all + ")");
}

void ScalingSchedule::validate(const EncoderConfig& cfg) const {
  if (points.empty()) bad("no points");
  std::set<std::size_t> sides;
  for (std::size_t s = 0; s < cfg.num_scales(); ++s) sides.insert(cfg.scale_side(s));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SchedulePoint& p = points[i];
    const std::string at = "point " + std::to_string(i) + ": ";
    if (!sides.count(p.max_res)) bad(at + "max_res " + std::to_string(p.max_res) + " is not a scale side");
    if (!(p.train_fraction > 0 && p.train_fraction <= 1)) bad(at + "train_fraction must be in (0, 1]");
    if (!(p.test_fraction > 0 && p.test_fraction <= 1)) bad(at + "test_fraction must be in (0, 1]");
  }
  const SchedulePoint& first = points.front();
  for (const SchedulePoint& p : points) {
    switch (regime) {
      case Regime::kWholeImage:
        if (p.train_fraction != 1 || p.test_fraction != 1) bad("whole-image points select every patch");
        break;
      case Regime::kConstantCost:
        if (point_total_k(cfg, p) != point_total_k(cfg, first)) bad("constant-cost points must select equal counts");
        break;
      case Regime::kConstantRes:
        if (p.max_res != first.max_res) bad("constant-res points share one max_res");
        break;
      case Regime::kTestTime:
        if (p.max_res != first.max_res || p.train_fraction != first.train_fraction)
          bad("test-time points share one max_res and train_fraction");
        break;
    }
  }
}

void to_json(nlohmann::json& j, const ScalingSchedule& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const SchedulePoint& p : s.points) {
    nlohmann::json jp{{"max_res", p.max_res}, {"train_fraction", p.train_fraction}, {"test_fraction", p.test_fraction}};
    if (!p.checkpoint.empty()) jp["checkpoint"] = p.checkpoint;
    pts.push_back(jp);
  }
  j = nlohmann::json{{"regime", to_string(s.regime)}, {"points", pts}};
}

void from_json(const nlohmann::json& j, ScalingSchedule& s) {
  try {
    for (const auto& [key, _] : j.items())
      if (key != "regime" && key != "points") bad("unknown field '" + key + "'");
    s.regime = regime_from_string(j.at("regime").get<std::string>());
    s.points.clear();
    for (const auto& jp : j.at("points")) {
      for (const auto& [key, _] : jp.items())
        if (key != "max_res" && key != "train_fraction" && key != "test_fraction" && key != "checkpoint")
          bad("unknown point field '" + key + "'");
      SchedulePoint p;
      p.max_res = jp.at("max_res").get<std::size_t>();
      p.train_fraction = jp.value("train_fraction", 1.0);
      p.test_fraction = jp.value("test_fraction", 1.0);
      p.checkpoint = jp.value("checkpoint", std::string());
      s.points.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
}

ScalingSchedule read_schedule(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("schedule: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("schedule: " + path.string() + ": " + e.what());
  }
  return j.get<ScalingSchedule>();
}

ScalingSchedule default_schedule(Regime regime, const EncoderConfig& cfg) {
  ScalingSchedule s;
  s.regime = regime;
  const std::size_t top = cfg.max_side();
  switch (regime) {
    case Regime::kWholeImage:
      for (std::size_t i = 0; i < cfg.num_scales(); ++i) s.points.push_back({cfg.scale_side(i), 1.0, 1.0, ""});
      break;
    case Regime::kConstantCost: {
      const double budget = static_cast<double>(cfg.scale_grid(0).cells());
      for (std::size_t i = 0; i < cfg.num_scales(); ++i) {
        const double f = budget / static_cast<double>(ladder_cells(cfg.truncated(cfg.scale_side(i))));
        s.points.push_back({cfg.scale_side(i), f, f, ""});
      }
      break;
    }
    case Regime::kConstantRes:
      for (double f : {0.2, 0.44, 1.0}) s.points.push_back({top, f, f, ""});
      break;
    case Regime::kTestTime:
      for (double f : {0.2, 0.44, 1.0}) s.points.push_back({top, 0.2, f, ""});
      break;
  }
  return s;
}

std::string default_checkpoint_name(const SchedulePoint& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "res%zu_train%g.ps3", p.max_res, p.train_fraction);
  return buf;
}

std::size_t point_total_k(const EncoderConfig& cfg, const SchedulePoint& p) {
  const double cells = static_cast<double>(ladder_cells(cfg.truncated(p.max_res)));
  return static_cast<std::size_t>(std::llround(p.test_fraction * cells));
}

std::vector<std::size_t> dynamic_resolution_schedule(std::size_t image_res, const EncoderConfig& cfg,
                                                     std::size_t total_k) {
  if (image_res < cfg.low_res_side)
    throw ArgumentError("dynamic resolution: image side " + std::to_string(image_res) + " is below the low-res side " +
                        std::to_string(cfg.low_res_side));
  const std::size_t n = cfg.num_scales();
  std::vector<std::size_t> weights(n, 0);
  if (image_res > cfg.low_res_side) {
    for (std::size_t s = 0; s + 1 < n; ++s) weights[s] = cfg.scale_grid(s).cells();
    if (static_cast<double>(image_res) >= cfg.dynamic_threshold_ratio * static_cast<double>(cfg.max_side()))
      weights[n - 1] = cfg.scale_grid(n - 1).cells();
  }
  const std::size_t active = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (active == 0) {
    if (total_k > 0) throw ArgumentError("dynamic resolution: no active scale for k = " + std::to_string(total_k));
    return weights;
  }
  if (total_k > active)
    throw ArgumentError("dynamic resolution: k = " + std::to_string(total_k) + " exceeds the " +
                        std::to_string(active) + " active cells");
  return largest_remainder(total_k, weights);
}

std::optional<double> recall_eval(const SelectionSet& selection, const std::vector<Box>& boxes,
                                  std::size_t base_width, std::size_t base_height) {
  std::size_t in_box = 0, hit = 0;
  for (std::size_t s = 0; s < selection.num_scales(); ++s) {
    std::vector<bool> inside(selection.grids[s].cells(), false);
    for (const Box& b : boxes) {
      const auto one = cells_in_box(b, base_width, base_height, selection.grids[s]);
      for (std::size_t i = 0; i < one.size(); ++i) inside[i] = inside[i] || one[i];
    }
    in_box += static_cast<std::size_t>(std::count(inside.begin(), inside.end(), true));
    for (std::size_t idx : selection.indices[s]) hit += inside.at(idx);
  }
  if (in_box == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(in_box);
}

SelectionSet random_selection(const std::vector<GridSpec>& grids, double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0 && fraction <= 1)) throw ArgumentError("random_selection: fraction must be in [0, 1]");
  SelectionSet sel;
  sel.grids = grids;
  for (const GridSpec& g : grids) {
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(g.cells())));
    std::vector<std::size_t> all(g.cells()), picked;
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
    sel.indices.push_back(std::move(picked));
  }
  return sel;
}

std::string file_hash(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("hash: cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s.str())));
  return buf;
}

namespace {

struct PointEval {
  std::optional<double> recall;
  std::optional<double> retrieval;
};

// Top-down selection from the caption, multi-round high-res encoding, and
// pooling over every selected token.
PointEval evaluate_point(const Ps3Model<float>& model, const Dataset& dataset, const std::vector<std::size_t>& records,
                         std::size_t total_k) {
  const EncoderConfig& cfg = model.cfg;
  std::vector<std::vector<float>> imgs, txts;
  double recall_sum = 0;
  std::size_t recall_n = 0;
  for (std::size_t r : records) {
    const DatasetRecord& rec = dataset.records.at(r);
    const auto locals = captioned_regions(rec, RegionKind::kLocal);
    if (locals.empty()) continue;
    const Region& region = rec.regions[locals.front()];
    const ImagePyramid pyr = build_pyramid(dataset.load_image(r), cfg);
    Tape<float> tape(false);
    Bound<float> m(model, tape, false);
    const LowResOutput<float> low = encode_low_res(m, pyr);
    const Var<float> text = text_encode(m, region.caption);
    const ScoreMap score = selection_score(m, low.tokens, aux_highres_encode(m, pyr), text, pyr.grids).to_score_map();
    MultiRoundOutput plan;
    const Var<float> feats = encode_multi_round(m, pyr, low, score, total_k, &plan);

    SelectionSet all;
    all.grids = pyr.grids;
    all.indices.assign(pyr.grids.size(), {});
    for (const SelectionSet& round : plan.rounds)
      for (std::size_t s = 0; s < round.num_scales(); ++s)
        all.indices[s].insert(all.indices[s].end(), round.indices[s].begin(), round.indices[s].end());
    if (const auto rc = recall_eval(all, {region.box}, rec.width, rec.height)) {
      recall_sum += *rc;
      ++recall_n;
    }
    const std::size_t n = feats.shape()[0];
    const Var<float> emb = n > 0 ? l2_normalize(attention_pool(m, feats, std::vector<bool>(n, true)))
                                 : l2_normalize(attention_pool(m, low.tokens, std::vector<bool>(low.tokens.shape()[0], true)));
    imgs.push_back(emb.value().values);
    txts.push_back(text.value().values);
  }
  PointEval e;
  if (recall_n > 0) e.recall = recall_sum / static_cast<double>(recall_n);
  constexpr std::size_t kGroup = 8;
  std::size_t correct = 0, asked = 0;
  for (std::size_t g0 = 0; g0 + kGroup <= imgs.size(); g0 += kGroup)
    for (std::size_t j = g0; j < g0 + kGroup; ++j) {
      std::size_t best = g0;
      double best_sim = -1e300;
      for (std::size_t i = g0; i < g0 + kGroup; ++i) {
        double sim = 0;
        for (std::size_t d = 0; d < imgs[i].size(); ++d) sim += static_cast<double>(imgs[i][d]) * txts[j][d];
        if (sim > best_sim) best_sim = sim, best = i;
      }
      correct += best == j;
      ++asked;
    }
  if (asked > 0) e.retrieval = static_cast<double>(correct) / static_cast<double>(asked);
  return e;
}

}  // namespace

std::vector<ScalingRow> run_scaling(const ScalingSchedule& schedule, const EncoderConfig& cfg,
                                    const fs::path& checkpoints, const Dataset* dataset,
                                    const ScalingOptions& options) {
  schedule.validate(cfg);
  if (!options.tokens_only && !dataset) throw ArgumentError("run_scaling: evaluation needs a dataset");
  std::vector<ScalingRow> rows;
  for (const SchedulePoint& p : schedule.points) {
    ScalingRow row;
    row.regime = schedule.regime;
    row.point = p;
    const EncoderConfig point_cfg = cfg.truncated(p.max_res);
    const std::size_t total_k = point_total_k(cfg, p);
    row.cost = count_tokens(point_cfg, allocate_k(static_cast<std::int64_t>(total_k), point_cfg.scale_grids()));
    if (options.tokens_only) {
      row.status = "tokens-only";
      rows.push_back(row);
      continue;
    }
    const fs::path path = checkpoints / (p.checkpoint.empty() ? default_checkpoint_name(p) : p.checkpoint);
    row.checkpoint = path.string();
    if (!fs::exists(path)) {
      row.status = "skipped: missing checkpoint " + path.filename().string();
      rows.push_back(row);
      continue;
    }
    row.checkpoint_hash = file_hash(path);
    const Checkpoint ck = read_checkpoint(path);
    if (ck.config.max_side() != p.max_res || ck.config.scale_grids() != point_cfg.scale_grids()) {
      row.status = "skipped: checkpoint ladder tops at " + std::to_string(ck.config.max_side());
      rows.push_back(row);
      continue;
    }
    const Ps3Model<float> model = model_from_checkpoint(ck);
    const PointEval e = evaluate_point(model, *dataset, options.eval_records, total_k);
    row.recall = e.recall;
    row.retrieval = e.retrieval;
    row.status = "ok";
    rows.push_back(row);
  }
  return rows;
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::string out =
      "regime,max_res,train_fraction,test_fraction,selected,hr_tokens,low_res_tokens,stage1_flops,aux_flops,"
      "stage3_flops,total_flops,recall,retrieval,checkpoint,checkpoint_hash,status\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const ScalingRow& r : rows) {
    out += std::string(to_string(r.regime)) + "," + std::to_string(r.point.max_res) + "," + fmt(r.point.train_fraction) +
           "," + fmt(r.point.test_fraction) + "," + std::to_string(r.cost.selected) + "," +
           std::to_string(r.cost.hr_tokens) + "," + std::to_string(r.cost.low_res_tokens) + "," +
           std::to_string(r.cost.flops.stage1) + "," + std::to_string(r.cost.flops.aux) + "," +
           std::to_string(r.cost.flops.stage3) + "," + std::to_string(r.cost.flops.total()) + "," + opt(r.recall) +
           "," + opt(r.retrieval) + "," + r.checkpoint + "," + r.checkpoint_hash + "," + r.status + "\n";
  }
  return out;
}

}  // namespace ps3
