#include "ps3/datagen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ps3/core/errors.hpp"

namespace ps3 {

namespace {

using Rng = std::mt19937_64;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[uniform(rng, i, n - 1)]);
  all.resize(k);
  return all;
}

void draw_glyph(Image& img, const Glyph& g) {
  const auto& pat = glyph_pattern(g.shape);
  const std::size_t px = g.side / 4;
  for (std::size_t y = 0; y < g.side; ++y)
    for (std::size_t x = 0; x < g.side; ++x) {
      if (!pat[(y / px) * 4 + x / px]) continue;
      std::uint8_t* p = img.pixel(g.x + x, g.y + y);
      p[0] = g.color.r;
      p[1] = g.color.g;
      p[2] = g.color.b;
    }
}

Rgb blend(Rgb a, Rgb b, double t) {
  auto mix = [t](std::uint8_t u, std::uint8_t v) {
    return static_cast<std::uint8_t>(std::lround((1 - t) * u + t * v));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

Rgb random_rgb(Rng& rng, std::size_t lo, std::size_t hi) {
  return {static_cast<std::uint8_t>(uniform(rng, lo, hi)), static_cast<std::uint8_t>(uniform(rng, lo, hi)),
          static_cast<std::uint8_t>(uniform(rng, lo, hi))};
}

std::size_t sector(double x, double y, const Box& b) {
  return position_word(x - b.x0, y - b.y0, b.width(), b.height());
}

Region global_region(const Scene& s, const std::vector<std::size_t>& region_colors) {
  Region g;
  g.kind = RegionKind::kGlobal;
  const double W = static_cast<double>(s.image.width), H = static_cast<double>(s.image.height);
  g.box = Box{0, 0, W, H};
  g.caption.push_back(vocab::kGlobal);
  for (std::size_t r = 0; r < region_colors.size(); ++r) {
    const Box& b = s.record.regions[r].box;
    g.caption.push_back(vocab::color(region_colors[r]));
    g.caption.push_back(vocab::position(position_word((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, W, H)));
  }
  return g;
}

void natural_scene(const SceneSpec& spec, Rng& rng, Scene& s) {
  const std::size_t R = spec.resolution, gs = spec.glyph_side;
  // Background: linear blend of two dim colors along a random direction.
  const Rgb c0 = random_rgb(rng, 30, 110), c1 = random_rgb(rng, 30, 110);
  const double angle = std::uniform_real_distribution<double>(0, 2 * M_PI)(rng);
  const double ax = std::cos(angle), ay = std::sin(angle);
  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < R; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(R) - 0.5;
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(R) - 0.5;
      const Rgb c = blend(c0, c1, std::clamp(0.5 + (u * ax + v * ay), 0.0, 1.0));
      std::uint8_t* p = s.image.pixel(x, y);
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }

  const std::size_t n_regions = uniform(rng, spec.min_regions, spec.max_regions);
  const auto colors = sample_distinct(rng, spec.palette.size(), n_regions);
  std::vector<Box> boxes;
  const std::size_t cells = R / kLayoutCell;
  for (std::size_t attempt = 0; boxes.size() < n_regions && attempt < 1000; ++attempt) {
    const std::size_t side = spec.box_sides[uniform(rng, 0, spec.box_sides.size() - 1)];
    const std::size_t span = side / kLayoutCell;
    const double x0 = static_cast<double>(uniform(rng, 0, cells - span) * kLayoutCell);
    const double y0 = static_cast<double>(uniform(rng, 0, cells - span) * kLayoutCell);
    const Box b{x0, y0, x0 + static_cast<double>(side), y0 + static_cast<double>(side)};
    bool clash = false;
    for (const Box& o : boxes) clash = clash || b.overlaps(o);
    if (!clash) boxes.push_back(b);
  }
  if (boxes.size() < spec.min_regions) throw ConfigError("resolution: too small to place the requested regions");

  std::vector<std::size_t> region_colors;
  for (std::size_t r = 0; r < boxes.size(); ++r) {
    const Box& b = boxes[r];
    const std::size_t color_idx = spec.palette[colors[r]];
    // Each region is a flat panel tinted toward its glyph color: the object
    // is findable at low res while the glyph shapes are not.
    const Rgb panel = blend(palette()[color_idx], random_rgb(rng, 100, 140), 0.55);
    for (auto y = static_cast<std::size_t>(b.y0); y < static_cast<std::size_t>(b.y1); ++y)
      for (auto x = static_cast<std::size_t>(b.x0); x < static_cast<std::size_t>(b.x1); ++x) {
        std::uint8_t* p = s.image.pixel(x, y);
        p[0] = panel.r;
        p[1] = panel.g;
        p[2] = panel.b;
      }
    region_colors.push_back(color_idx);
    const Rgb color = palette()[color_idx];
    // Glyphs sit in distinct sub-slots of twice the glyph side.
    const std::size_t slot = 2 * gs;
    const std::size_t per_row = static_cast<std::size_t>(b.width()) / slot;
    const std::size_t n_slots = per_row * (static_cast<std::size_t>(b.height()) / slot);
    const std::size_t n = std::min(n_slots, uniform(rng, spec.min_glyphs, spec.max_glyphs));
    auto picks = sample_distinct(rng, n_slots, n);
    std::sort(picks.begin(), picks.end());
    Region region;
    region.box = b;
    for (std::size_t k : picks) {
      Glyph g;
      g.side = gs;
      g.x = static_cast<std::size_t>(b.x0) + (k % per_row) * slot + uniform(rng, 0, 1) * gs;
      g.y = static_cast<std::size_t>(b.y0) + (k / per_row) * slot + uniform(rng, 0, 1) * gs;
      g.shape = uniform(rng, 0, vocab::kNumShapes - 1);
      g.color = color;
      g.region = static_cast<long>(r);
      const double cx = static_cast<double>(g.x) + static_cast<double>(gs) / 2;
      const double cy = static_cast<double>(g.y) + static_cast<double>(gs) / 2;
      region.caption.push_back(vocab::color(color_idx));
      region.caption.push_back(vocab::shape(g.shape));
      region.caption.push_back(vocab::position(sector(cx, cy, b)));
      s.glyphs.push_back(g);
    }
    s.record.regions.push_back(std::move(region));
  }

  // Distractors: faint glyphs clear of every box.
  const std::size_t n_distract = uniform(rng, spec.min_distractors, spec.max_distractors);
  std::size_t placed = 0;
  for (std::size_t attempt = 0; placed < n_distract && attempt < 200; ++attempt) {
    Glyph g;
    g.side = gs;
    g.x = uniform(rng, 0, R / gs - 1) * gs;
    g.y = uniform(rng, 0, R / gs - 1) * gs;
    const Box gb{static_cast<double>(g.x) - gs, static_cast<double>(g.y) - gs, static_cast<double>(g.x + 2 * gs),
                 static_cast<double>(g.y + 2 * gs)};
    bool clash = false;
    for (const Box& o : boxes) clash = clash || gb.overlaps(o);
    if (clash) continue;
    g.shape = uniform(rng, 0, vocab::kNumShapes - 1);
    const std::uint8_t* bg = s.image.pixel(g.x, g.y);
    g.color = blend({bg[0], bg[1], bg[2]}, palette()[spec.palette[uniform(rng, 0, spec.palette.size() - 1)]], 0.35);
    s.glyphs.push_back(g);
    ++placed;
  }
  for (const Glyph& g : s.glyphs) draw_glyph(s.image, g);
  s.record.regions.insert(s.record.regions.begin(), global_region(s, region_colors));
}

void document_scene(const SceneSpec& spec, Rng& rng, Scene& s) {
  const std::size_t R = spec.resolution, gs = spec.glyph_side;
  const Rgb bg = random_rgb(rng, 15, 45);
  for (std::size_t i = 0; i < R * R; ++i) {
    s.image.rgb[3 * i] = bg.r;
    s.image.rgb[3 * i + 1] = bg.g;
    s.image.rgb[3 * i + 2] = bg.b;
  }
  // Words on every other row of layout cells, separated by one empty cell.
  struct Word {
    std::size_t row, col, len;
  };
  std::vector<Word> words;
  const std::size_t cells = R / kLayoutCell;
  for (std::size_t row = 1; row + 1 < cells; row += 2) {
    std::size_t col = uniform(rng, 0, 1);
    while (true) {
      const std::size_t len = uniform(rng, spec.min_glyphs, spec.max_glyphs);
      if (col + len > cells) break;
      words.push_back({row, col, len});
      col += len + 1;
    }
  }
  const std::size_t n_labeled = std::min(words.size(), uniform(rng, spec.min_regions, spec.max_regions));
  if (n_labeled < spec.min_regions) throw ConfigError("resolution: too small to place the requested words");
  auto labeled = sample_distinct(rng, words.size(), n_labeled);
  std::sort(labeled.begin(), labeled.end());
  const auto colors = sample_distinct(rng, spec.palette.size(), n_labeled);
  const Rgb ink = blend(bg, {200, 200, 200}, 0.45);

  std::vector<std::size_t> region_colors;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const Word& word = words[w];
    const auto it = std::find(labeled.begin(), labeled.end(), w);
    const long region = it == labeled.end() ? -1 : static_cast<long>(it - labeled.begin());
    Region r;
    std::size_t color_idx = 0;
    if (region >= 0) {
      color_idx = spec.palette[colors[static_cast<std::size_t>(region)]];
      region_colors.push_back(color_idx);
      r.box = Box{static_cast<double>(word.col * kLayoutCell), static_cast<double>(word.row * kLayoutCell),
                  static_cast<double>((word.col + word.len) * kLayoutCell),
                  static_cast<double>((word.row + 1) * kLayoutCell)};
      r.caption.push_back(vocab::color(color_idx));
    }
    const std::size_t y_off = uniform(rng, 1, kLayoutCell / gs - 2) * gs;
    for (std::size_t k = 0; k < word.len; ++k) {
      Glyph g;
      g.side = gs;
      g.x = (word.col + k) * kLayoutCell + uniform(rng, 1, kLayoutCell / gs - 2) * gs;
      g.y = word.row * kLayoutCell + y_off;
      g.shape = uniform(rng, 0, vocab::kNumShapes - 1);
      g.color = region >= 0 ? palette()[color_idx] : ink;
      g.region = region;
      if (region >= 0) r.caption.push_back(vocab::shape(g.shape));
      s.glyphs.push_back(g);
    }
    if (region >= 0) s.record.regions.push_back(std::move(r));
  }
  for (const Glyph& g : s.glyphs) draw_glyph(s.image, g);
  s.record.regions.insert(s.record.regions.begin(), global_region(s, region_colors));
}

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (resolution == 0 || resolution % kLayoutCell != 0)
    fail("resolution", "must be a positive multiple of " + std::to_string(kLayoutCell));
  if (low_res_side == 0 || resolution % low_res_side != 0) fail("low_res_side", "must divide resolution");
  if (glyph_side == 0 || glyph_side % 4 != 0) fail("glyph_side", "must be a positive multiple of 4");
  if (4 * glyph_side > kLayoutCell) fail("glyph_side", "at most a quarter of the layout cell");
  if (!(glyph_side * low_res_side < 2 * resolution))
    fail("glyph_side", "must be below 2 * resolution / low_res_side so glyphs are unresolvable at low res");
  if (min_glyphs == 0 || min_glyphs > max_glyphs) fail("min_glyphs", "need 1 <= min_glyphs <= max_glyphs");
  if (min_regions == 0 || min_regions > max_regions) fail("min_regions", "need 1 <= min_regions <= max_regions");
  if (3 * max_glyphs > 16) fail("max_glyphs", "captions would exceed 16 tokens");
  if (box_sides.empty()) fail("box_sides", "must not be empty");
  for (std::size_t b : box_sides)
    if (b == 0 || b % kLayoutCell != 0 || b > resolution)
      fail("box_sides", "each side must be a multiple of " + std::to_string(kLayoutCell) + " within resolution");
  if (min_distractors > max_distractors) fail("min_distractors", "exceeds max_distractors");
  if (palette.size() < max_regions) fail("palette", "needs at least max_regions colors");
  for (std::size_t i = 0; i < palette.size(); ++i) {
    if (palette[i] >= vocab::kNumColors) fail("palette", "color index out of range");
    if (std::count(palette.begin(), palette.end(), palette[i]) != 1) fail("palette", "duplicate color");
  }
  if (!(document_fraction >= 0 && document_fraction <= 1)) fail("document_fraction", "must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"resolution", s.resolution},
                     {"low_res_side", s.low_res_side},
                     {"glyph_side", s.glyph_side},
                     {"min_glyphs", s.min_glyphs},
                     {"max_glyphs", s.max_glyphs},
                     {"min_regions", s.min_regions},
                     {"max_regions", s.max_regions},
                     {"box_sides", s.box_sides},
                     {"min_distractors", s.min_distractors},
                     {"max_distractors", s.max_distractors},
                     {"palette", s.palette},
                     {"style", s.style == SceneStyle::kDocument ? "document" : "natural"},
                     {"document_fraction", s.document_fraction}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  if (!j.is_object()) throw ConfigError("scene: expected an object");
  static const char* known[] = {"seed",        "resolution",      "low_res_side",    "glyph_side",
                                "min_glyphs",  "max_glyphs",      "min_regions",     "max_regions",
                                "box_sides",   "min_distractors", "max_distractors", "palette",
                                "style",       "document_fraction"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(it.key() + ": unknown scene field");
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(key) + ": wrong type");
    }
  };
  read("seed", s.seed);
  read("resolution", s.resolution);
  read("low_res_side", s.low_res_side);
  read("glyph_side", s.glyph_side);
  read("min_glyphs", s.min_glyphs);
  read("max_glyphs", s.max_glyphs);
  read("min_regions", s.min_regions);
  read("max_regions", s.max_regions);
  read("box_sides", s.box_sides);
  read("min_distractors", s.min_distractors);
  read("max_distractors", s.max_distractors);
  read("palette", s.palette);
  read("document_fraction", s.document_fraction);
  if (j.contains("style")) {
    std::string style;
    read("style", style);
    if (style == "natural") s.style = SceneStyle::kNatural;
    else if (style == "document") s.style = SceneStyle::kDocument;
    else throw ConfigError("style: expected natural or document");
  }
}

const std::array<std::uint8_t, 16>& glyph_pattern(std::size_t shape) {
  static const std::array<std::array<std::uint8_t, 16>, vocab::kNumShapes> patterns = [] {
    std::array<std::array<std::uint8_t, 16>, vocab::kNumShapes> p{};
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        const std::size_t i = y * 4 + x;
        p[0][i] = y % 2 == 0;             // hbars
        p[1][i] = x % 2 == 0;             // vbars
        p[2][i] = (x + y) % 2 == 0;       // checker
        p[3][i] = y < 2;                  // tophalf
        p[4][i] = y >= 2;                 // bottomhalf
        p[5][i] = x < 2;                  // lefthalf
        p[6][i] = x >= 2;                 // righthalf
        p[7][i] = (x < 2) == (y < 2);     // blocks
      }
    return p;
  }();
  if (shape >= vocab::kNumShapes) throw ArgumentError("unknown glyph shape " + std::to_string(shape));
  return patterns[shape];
}

Scene synth_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene s;
  s.image = Image(spec.resolution, spec.resolution);
  s.record.width = s.record.height = spec.resolution;
  s.record.source = spec.style == SceneStyle::kDocument ? SourceTag::kDocument : SourceTag::kNatural;
  if (spec.style == SceneStyle::kDocument)
    document_scene(spec, rng, s);
  else
    natural_scene(spec, rng, s);
  // Glyph regions were counted before the global region was put in front.
  for (Glyph& g : s.glyphs)
    if (g.region >= 0) ++g.region;
  validate_record(s.record);
  return s;
}

MaskSet scene_masks(const Scene& scene) {
  MaskSet ms;
  ms.width = scene.image.width;
  ms.height = scene.image.height;
  for (const Glyph& g : scene.glyphs) {
    const auto& pat = glyph_pattern(g.shape);
    const std::size_t px = g.side / 4;
    Mask m;
    for (std::size_t y = 0; y < g.side; ++y)
      for (std::size_t c = 0; c < 4; ++c) {
        if (!pat[(y / px) * 4 + c]) continue;
        if (!m.runs.empty() && m.runs.back().y == g.y + y && m.runs.back().x0 + m.runs.back().length == g.x + c * px)
          m.runs.back().length += px;
        else
          m.runs.push_back({g.y + y, g.x + c * px, px});
      }
    ms.masks.push_back(std::move(m));
  }
  return ms;
}

Scene paste_at(const Scene& sample, std::size_t bg_side, std::size_t x, std::size_t y, Rgb background) {
  const Image& src = sample.image;
  if (src.width > bg_side || src.height > bg_side)
    throw ArgumentError("paste: sample " + std::to_string(src.width) + "x" + std::to_string(src.height) +
                        " does not fit a " + std::to_string(bg_side) + " canvas");
  if (x + src.width > bg_side || y + src.height > bg_side) throw ArgumentError("paste: offset puts the sample off the canvas");
  Scene out;
  out.image = Image(bg_side, bg_side);
  for (std::size_t i = 0; i < bg_side * bg_side; ++i) {
    out.image.rgb[3 * i] = background.r;
    out.image.rgb[3 * i + 1] = background.g;
    out.image.rgb[3 * i + 2] = background.b;
  }
  for (std::size_t r = 0; r < src.height; ++r)
    std::copy_n(src.pixel(0, r), src.width * 3, out.image.pixel(x, y + r));
  out.record = sample.record;
  out.record.width = out.record.height = bg_side;
  out.record.regions.clear();
  std::vector<long> remap(sample.record.regions.size(), -1);
  for (std::size_t i = 0; i < sample.record.regions.size(); ++i) {
    Region r = sample.record.regions[i];
    if (r.kind == RegionKind::kGlobal) continue;
    r.box = r.box.translated(static_cast<double>(x), static_cast<double>(y));
    remap[i] = static_cast<long>(out.record.regions.size());
    out.record.regions.push_back(std::move(r));
  }
  for (Glyph g : sample.glyphs) {
    g.x += x;
    g.y += y;
    g.region = g.region >= 0 ? remap[static_cast<std::size_t>(g.region)] : -1;
    out.glyphs.push_back(g);
  }
  return out;
}

Scene paste_on_background(const Scene& sample, std::size_t bg_side, std::mt19937_64& rng) {
  if (sample.image.width > bg_side || sample.image.height > bg_side)
    throw ArgumentError("paste: sample " + std::to_string(sample.image.width) + "x" +
                        std::to_string(sample.image.height) + " does not fit a " + std::to_string(bg_side) + " canvas");
  const std::size_t x = uniform(rng, 0, bg_side - sample.image.width);
  const std::size_t y = uniform(rng, 0, bg_side - sample.image.height);
  return paste_at(sample, bg_side, x, y, random_rgb(rng, 0, 255));
}

SceneStyle dataset_style(const SceneSpec& spec, std::size_t i) {
  const double f = spec.document_fraction;
  const auto before = static_cast<long long>(std::floor(static_cast<double>(i) * f));
  const auto after = static_cast<long long>(std::floor(static_cast<double>(i + 1) * f));
  return after > before ? SceneStyle::kDocument : SceneStyle::kNatural;
}

SceneSpec record_spec(const SceneSpec& spec, std::size_t i) {
  SceneSpec s = spec;
  s.style = dataset_style(spec, i);
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  s.seed = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  return s;
}

}  // namespace ps3
