// ps3: data curation and synthesis, pre-training, patch selection and scaling
// benchmarks from one binary.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ps3/core/errors.hpp"
#include "ps3/datagen/curation.hpp"
#include "ps3/datagen/scene.hpp"
#include "ps3/datagen/vocab.hpp"
#include "ps3/encoder/checkpoint.hpp"
#include "ps3/harness/scaling.hpp"
#include "ps3/harness/viz.hpp"
#include "ps3/pretrain/trainer.hpp"

namespace fs = std::filesystem;
using namespace ps3;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Files matching a pattern whose wildcards sit in the last path component,
// sorted by path. A pattern without wildcards names one file.
std::vector<fs::path> glob_files(const std::string& pattern) {
  const fs::path p(pattern);
  const std::string name = p.filename().string();
  if (name.find_first_of("*?[") == std::string::npos) return fs::exists(p) ? std::vector<fs::path>{p} : std::vector<fs::path>{};
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && fnmatch(name.c_str(), e.path().filename().c_str(), 0) == 0) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
T read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dataset_hash(const fs::path& dir) {
  // Index bytes followed by every image's bytes, in record order.
  std::ifstream index(dir / "index.jsonl", std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(index), {});
  const Dataset ds = read_dataset(dir);
  for (const auto& r : ds.records) {
    std::ifstream in(ds.root / r.image_path, std::ios::binary);
    bytes.append(std::istreambuf_iterator<char>(in), {});
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// ---- curate ----

struct CurateArgs {
  std::string masks, images, out;
  std::size_t k = 4;
  double fraction = 0.2;
};

int run_curate(const CurateArgs& a) {
  std::map<std::string, fs::path> masks_by_stem;
  for (const fs::path& m : glob_files(a.masks)) masks_by_stem[m.stem().string()] = m;
  const auto images = glob_files(a.images);
  if (images.empty()) throw DataError("curate: no image matches " + a.images);

  DatasetWriter writer(a.out);
  std::size_t written = 0;
  for (const fs::path& img_path : images) {
    const auto it = masks_by_stem.find(img_path.stem().string());
    if (it == masks_by_stem.end()) {
      std::cerr << "skip " << img_path.string() << ": no mask file with stem " << img_path.stem().string() << "\n";
      continue;
    }
    try {
      const Image img = read_ppm(img_path);
      const MaskSet masks = read_masks(it->second);
      if (masks.width != img.width || masks.height != img.height)
        throw DataError("mask size " + std::to_string(masks.width) + "x" + std::to_string(masks.height) +
                        " differs from image size " + std::to_string(img.width) + "x" + std::to_string(img.height));
      const auto cands = preset_boxes_fraction(img.width, img.height, a.fraction);
      const SalientBoxes picked = select_salient_boxes(cands, masks, a.k);
      DatasetRecord rec;
      rec.width = img.width;
      rec.height = img.height;
      rec.source = SourceTag::kCurated;
      for (std::size_t i = 0; i < picked.boxes.size(); ++i)
        if (picked.scores[i] > 0) rec.regions.push_back({picked.boxes[i], {}, RegionKind::kLocal});
      writer.add(img, rec);
      ++written;
      std::cout << img_path.filename().string() << ": " << rec.regions.size() << " boxes\n";
    } catch (const DataError& e) {
      std::cerr << "skip " << img_path.string() << ": " << e.what() << "\n";
    }
  }
  if (written == 0) throw DataError("curate: every image was skipped");
  std::cout << written << " records written to " << a.out << "\n";
  return kOk;
}

// ---- synth ----

struct SynthArgs {
  std::string spec, out;
  std::size_t count = 0;
  std::optional<std::uint64_t> seed;
  std::size_t paste_side = 0;
};

int run_synth(const SynthArgs& a) {
  SceneSpec spec = a.spec.empty() ? SceneSpec{} : read_json_file<SceneSpec>(a.spec);
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  std::size_t natural = 0, document = 0;
  {
    DatasetWriter writer(a.out);
    for (std::size_t i = 0; i < a.count; ++i) {
      Scene s = synth_scene(record_spec(spec, i));
      if (a.paste_side > 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(i), 0x9a57u};
        std::mt19937_64 rng(seq);
        s = paste_on_background(s, a.paste_side, rng);
      }
      (s.record.source == SourceTag::kDocument ? document : natural) += 1;
      writer.add(s.image, s.record);
    }
  }
  std::cout << a.count << " records (" << natural << " natural, " << document << " document) in " << a.out << "\n";
  std::cout << "hash " << dataset_hash(a.out) << "\n";
  return kOk;
}

// ---- pretrain ----

struct PretrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablate;
  bool resume = false;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> eval_records;
};

int run_pretrain(const PretrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : read_json_file<TrainConfig>(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.eval_records) cfg.eval_records = *a.eval_records;
  for (const std::string& name : a.ablate) disable_design(cfg.designs, name);
  cfg.validate();
  const Dataset ds = read_dataset(a.data);
  const TrainResult r = train_loop(ds, cfg, a.out, a.resume, &std::cout, a.max_steps);
  std::cout << "finished at step " << r.steps << " of " << cfg.total_steps() << "\n";
  return kOk;
}

// ---- select ----

struct SelectArgs {
  std::string checkpoint, image, prompt, out;
  bool bottom_up = false;
  std::optional<std::size_t> k;
  std::optional<double> fraction;
  bool pca = false;
};

int run_select(const SelectArgs& a) {
  if (a.bottom_up == !a.prompt.empty()) throw ConfigError("select: give exactly one of --prompt and --bottom-up");
  if (a.k.has_value() == a.fraction.has_value()) throw ConfigError("select: give exactly one of --k and --fraction");
  const std::vector<std::size_t> caption = a.bottom_up ? std::vector<std::size_t>{} : encode_words(a.prompt);
  if (!a.bottom_up && caption.empty()) throw ArgumentError("select: empty prompt");

  const Ps3Model<float> model = model_from_checkpoint(read_checkpoint(a.checkpoint));
  const EncoderConfig& cfg = model.cfg;
  const ImagePyramid pyr = build_pyramid(read_ppm(a.image), cfg);
  std::size_t cells = 0;
  for (const GridSpec& g : pyr.grids) cells += g.cells();
  std::size_t total_k = 0;
  if (a.k) {
    if (*a.k > cells) throw ArgumentError("select: k = " + std::to_string(*a.k) + " exceeds " + std::to_string(cells) + " cells");
    total_k = *a.k;
  } else {
    if (!(*a.fraction >= 0 && *a.fraction <= 1)) throw ArgumentError("select: fraction must be in [0, 1]");
    total_k = static_cast<std::size_t>(std::llround(*a.fraction * static_cast<double>(cells)));
  }

  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  const LowResOutput<float> low = encode_low_res(m, pyr);
  const Var<float> prompt = a.bottom_up ? bottom_up_prompt(m) : text_encode(m, caption);
  const ScoreMap score = selection_score(m, low.tokens, aux_highres_encode(m, pyr), prompt, pyr.grids).to_score_map();
  MultiRoundOutput plan;
  encode_multi_round(m, pyr, low, score, total_k, &plan);

  SelectionSet sel;
  sel.grids = pyr.grids;
  sel.indices.assign(pyr.grids.size(), {});
  for (const SelectionSet& round : plan.rounds)
    for (std::size_t s = 0; s < round.num_scales(); ++s)
      sel.indices[s].insert(sel.indices[s].end(), round.indices[s].begin(), round.indices[s].end());
  for (auto& idx : sel.indices) std::sort(idx.begin(), idx.end());

  const fs::path out(a.out);
  fs::create_directories(out);
  nlohmann::json scales = nlohmann::json::array();
  for (std::size_t s = 0; s < pyr.grids.size(); ++s) {
    const std::string tag = std::to_string(cfg.scale_side(s));
    write_ppm(out / ("heatmap_" + tag + ".ppm"), render_score_heatmap(score, s));
    write_ppm(out / ("overlay_" + tag + ".ppm"), render_selection_overlay(pyr, sel, s));
    scales.push_back({{"side", cfg.scale_side(s)},
                      {"rows", pyr.grids[s].rows},
                      {"cols", pyr.grids[s].cols},
                      {"indices", sel.indices[s]}});
  }
  if (a.pca) {
    const Tensor<double> tokens = tensor_cast<double>(low.tokens.value());
    write_ppm(out / "pca_lowres.ppm", render_pca(pca_features(tokens), pyr.low_grid));
  }
  const nlohmann::json doc{{"mode", a.bottom_up ? "bottom-up" : "top-down"},
                           {"prompt", a.bottom_up ? "" : decode_caption(caption)},
                           {"total", sel.total()},
                           {"rounds", plan.rounds.size()},
                           {"scales", scales}};
  std::ofstream(out / "selection.json", std::ios::binary) << doc.dump(2) << "\n";
  std::cout << doc.dump() << "\n";
  return kOk;
}

// ---- bench ----

struct BenchArgs {
  std::string schedule, regime, checkpoints, out, data, profile = "desk";
  bool tokens_only = false;
  std::size_t eval_records = 64;
};

int run_bench(const BenchArgs& a) {
  if (a.schedule.empty() == a.regime.empty()) throw ConfigError("bench: give exactly one of --schedule and --regime");
  EncoderConfig cfg;
  if (a.profile == "desk") cfg = desk_profile();
  else if (a.profile == "paper") cfg = paper_profile();
  else throw ConfigError("profile: unknown '" + a.profile + "' (known: desk, paper)");
  const ScalingSchedule schedule =
      a.schedule.empty() ? default_schedule(regime_from_string(a.regime), cfg) : read_schedule(a.schedule);
  schedule.validate(cfg);

  ScalingOptions opt;
  opt.tokens_only = a.tokens_only;
  std::optional<Dataset> ds;
  if (!a.tokens_only) {
    if (a.data.empty()) throw ConfigError("bench: --data is required unless --tokens-only is set");
    if (a.checkpoints.empty()) throw ConfigError("bench: --checkpoints is required unless --tokens-only is set");
    ds = read_dataset(a.data);
    const std::size_t n = std::min(a.eval_records, ds->size());
    for (std::size_t i = ds->size() - n; i < ds->size(); ++i) opt.eval_records.push_back(i);
  }
  const auto rows = run_scaling(schedule, cfg, a.checkpoints, ds ? &*ds : nullptr, opt);
  const std::string csv = scaling_csv(rows);
  if (!a.out.empty()) {
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream(out, std::ios::binary) << csv;
  }
  std::cout << csv;
  for (const auto& r : rows)
    if (r.status.rfind("skipped", 0) == 0) std::cerr << "row max_res=" << r.point.max_res << ": " << r.status << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-selective vision pre-training on synthetic data."};
  app.name("ps3");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  CurateArgs curate;
  auto* c = app.add_subcommand("curate", "Pick salient boxes from mask files and write a caption-free dataset");
  c->add_option("--masks", curate.masks, "Mask files (glob in the file name), paired with images by stem")->required();
  c->add_option("--images", curate.images, "PPM images (glob in the file name)")->required();
  c->add_option("--k", curate.k, "Boxes kept per image")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--fraction", curate.fraction, "Preset box side as a fraction of the shorter image side")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c->add_option("--out", curate.out, "Output dataset directory")->required();

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset of natural and document scenes");
  s->add_option("--spec", synth.spec, "Scene spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  s->add_option("--count", synth.count, "Number of records")->required();
  s->add_option("--seed", synth.seed, "Overrides the spec seed");
  s->add_option("--paste-side", synth.paste_side, "Paste each scene onto a solid canvas of this side (0 = off)")
      ->capture_default_str();
  s->add_option("--out", synth.out, "Output dataset directory")->required();

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Pre-train the encoder on a dataset");
  p->add_option("--config", pre.config, "Training config JSON (defaults when omitted)")->check(CLI::ExistingFile);
  p->add_option("--data", pre.data, "Dataset directory or index file")->required();
  p->add_option("--out", pre.out, "Run directory for checkpoints and metrics.csv")->required();
  p->add_option("--seed", pre.seed, "Overrides the config seed");
  p->add_option("--ablate", pre.ablate,
                "Switch off a design (repeatable): gt-selection, inbox-pool, mix-global, intra-image, multi-scale, "
                "scale-pe, kv-cache");
  p->add_flag("--resume", pre.resume, "Continue from <out>/latest.ps3");
  p->add_option("--max-steps", pre.max_steps, "Stop after this many steps in this invocation");
  p->add_option("--eval-records", pre.eval_records, "Overrides the number of held-out evaluation records");

  SelectArgs sel;
  auto* q = app.add_subcommand("select", "Score and select high-res patches of one image");
  q->add_option("--checkpoint", sel.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  q->add_option("--image", sel.image, "PPM image")->required()->check(CLI::ExistingFile);
  q->add_option("--prompt", sel.prompt, "Top-down prompt in caption words, e.g. \"red hbars upper-left\"");
  q->add_flag("--bottom-up", sel.bottom_up, "Use the learned saliency prompt instead of a caption");
  q->add_option("--k", sel.k, "Patches to select over all scales");
  q->add_option("--fraction", sel.fraction, "Share of all high-res cells to select");
  q->add_flag("--pca", sel.pca, "Also write a PCA coloring of the low-res tokens");
  q->add_option("--out", sel.out, "Output directory for heatmaps, overlays and selection.json")->required();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Token, FLOP, recall and retrieval table over a scaling schedule");
  b->add_option("--schedule", bench.schedule, "Schedule JSON")->check(CLI::ExistingFile);
  b->add_option("--regime", bench.regime, "Built-in schedule: whole-image, constant-cost, constant-res, test-time");
  b->add_option("--profile", bench.profile, "Encoder profile: desk or paper")->capture_default_str();
  b->add_option("--checkpoints", bench.checkpoints, "Directory holding the schedule's checkpoints");
  b->add_option("--data", bench.data, "Dataset for recall and retrieval");
  b->add_option("--eval-records", bench.eval_records, "Last records of the dataset used for evaluation")
      ->capture_default_str();
  b->add_flag("--tokens-only", bench.tokens_only, "Token and FLOP columns only; no checkpoints needed");
  b->add_option("--out", bench.out, "CSV output file (also printed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c) return run_curate(curate);
    if (*s) return run_synth(synth);
    if (*p) return run_pretrain(pre);
    if (*q) return run_select(sel);
    if (*b) return run_bench(bench);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
