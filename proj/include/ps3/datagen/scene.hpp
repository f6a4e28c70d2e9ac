#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"
#include "ps3/core/image.hpp"
#include "ps3/datagen/dataset.hpp"
#include "ps3/datagen/masks.hpp"
#include "ps3/datagen/vocab.hpp"

namespace ps3 {

enum class SceneStyle { kNatural, kDocument };

// Layout unit: region boxes and document word slots snap to this grid.
constexpr std::size_t kLayoutCell = 16;

struct SceneSpec {
  std::uint64_t seed = 1;
  std::size_t resolution = 256;
  std::size_t low_res_side = 64;
  std::size_t glyph_side = 4;
  std::size_t min_glyphs = 2;  // per region (natural) or per word (document)
  std::size_t max_glyphs = 4;
  std::size_t min_regions = 3;
  std::size_t max_regions = 4;
  std::vector<std::size_t> box_sides{32, 48, 64};
  std::size_t min_distractors = 6;
  std::size_t max_distractors = 12;
  std::vector<std::size_t> palette{0, 1, 2, 3, 4, 5, 6, 7};  // color token indices
  SceneStyle style = SceneStyle::kNatural;
  // Share of document-style records when generating a dataset.
  double document_fraction = 0.5;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const SceneSpec& spec);
void from_json(const nlohmann::json& j, SceneSpec& spec);

// 4x4 bit pattern of a shape, row-major. Every pattern sets exactly 8 pixels,
// so averaging a 4x4-aligned glyph down to one pixel erases its shape.
const std::array<std::uint8_t, 16>& glyph_pattern(std::size_t shape);

struct Glyph {
  std::size_t x = 0, y = 0;  // top-left pixel
  std::size_t side = 0;
  std::size_t shape = 0;
  Rgb color;
  long region = -1;  // index into the record's regions, -1 for distractors and filler
};

struct Scene {
  Image image;
  DatasetRecord record;  // image_path left empty
  std::vector<Glyph> glyphs;
};

// Natural style: a smooth background, 3-4 disjoint flat panels tinted toward
// their region color, each holding 2-4 glyphs of that color, and faint
// distractor glyphs outside the panels. Each local caption lists (color,
// shape, position-in-box) per glyph in raster order. Document style: rows of
// glyph words; 3-4 colored words get boxes with captions (color, shapes...).
// The global region's caption is <global> followed by (color, image
// position) per local region.
Scene synth_scene(const SceneSpec& spec);

// One mask per glyph covering its set pixels.
MaskSet scene_masks(const Scene& scene);

// Places the sample on a solid square canvas at the given offset. Local
// regions move with it; the global region is dropped since its caption
// describes the original frame.
Scene paste_at(const Scene& sample, std::size_t bg_side, std::size_t x, std::size_t y, Rgb background);
// Random offset and canvas color drawn from rng.
Scene paste_on_background(const Scene& sample, std::size_t bg_side, std::mt19937_64& rng);

// Style of the i-th record of a generated dataset, spreading document records
// evenly at the spec's document_fraction.
SceneStyle dataset_style(const SceneSpec& spec, std::size_t i);
// Per-record spec: style from dataset_style, seed mixed with the index.
SceneSpec record_spec(const SceneSpec& spec, std::size_t i);

}  // namespace ps3
