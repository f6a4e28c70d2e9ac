#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "../common/oracles.hpp"
#include "doctest.h"
#include "ps3/core/errors.hpp"
#include "ps3/datagen/curation.hpp"
#include "ps3/datagen/dataset.hpp"
#include "ps3/datagen/masks.hpp"
#include "ps3/datagen/scene.hpp"
#include "ps3/datagen/vocab.hpp"

using namespace ps3;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ps3_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SceneSpec spec_with(std::uint64_t seed, SceneStyle style) {
  SceneSpec s;
  s.seed = seed;
  s.style = style;
  return s;
}

double color_distance(const float* px, Rgb c) {
  const double d[3] = {px[0] - c.r / 255.0, px[1] - c.g / 255.0, px[2] - c.b / 255.0};
  return std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
}

bool glyph_inside(const Glyph& g, const Box& b) {
  return b.x0 <= static_cast<double>(g.x) && static_cast<double>(g.x + g.side) <= b.x1 &&
         b.y0 <= static_cast<double>(g.y) && static_cast<double>(g.y + g.side) <= b.y1;
}

}  // namespace

TEST_CASE("vocabulary layout and prompt encoding") {
  const auto& v = vocabulary();
  CHECK(v.size() == 256);
  CHECK(std::set<std::string>(v.begin(), v.end()).size() == 256);
  CHECK(v[vocab::kGlobal] == "<global>");
  CHECK(token_id("red") == vocab::color(0));
  CHECK(token_id("blocks") == vocab::shape(7));
  CHECK(token_id("center") == vocab::position(4));
  CHECK(encode_words("red  hbars center") == std::vector<std::size_t>{2, 10, 22});
  CHECK(decode_caption({2, 10, 22}) == "red hbars center");
  try {
    encode_words("red banana");
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("banana") != std::string::npos);
    CHECK(std::string(e.what()).find("checker") != std::string::npos);
  }
  for (const Rgb& c : palette()) CHECK_FALSE((c.r == 255 && c.g == 255 && c.b == 0));
  CHECK(position_word(0, 0, 90, 90) == 0);
  CHECK(position_word(45, 45, 90, 90) == 4);
  CHECK(position_word(89.9, 89.9, 90, 90) == 8);
  CHECK(position_word(90, 10, 90, 90) == 2);
}

TEST_CASE("glyph patterns set eight pixels and differ pairwise") {
  for (std::size_t s = 0; s < vocab::kNumShapes; ++s) {
    const auto& p = glyph_pattern(s);
    CHECK(std::count(p.begin(), p.end(), 1) == 8);
    for (std::size_t t = 0; t < s; ++t) CHECK(p != glyph_pattern(t));
  }
  CHECK_THROWS_AS(glyph_pattern(8), ArgumentError);
}

TEST_CASE("mask files round trip and report bad lines") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    MaskSet ms = oracle::random_masks(rng, 40, 30, 1 + rng() % 5);
    // Random rows may repeat within a mask; keep only disjoint masks.
    bool ok = true;
    try {
      parse_masks(format_masks(ms));
    } catch (const ParseError&) {
      ok = false;
    }
    if (!ok) continue;
    CHECK(parse_masks(format_masks(ms)) == ms);
  }

  const std::string good = "PS3MASKS 1\nsize 10 10\n# comment\nmask 2\n0 0 3\n1 2 2\nend\n";
  const MaskSet ms = parse_masks(good);
  REQUIRE(ms.masks.size() == 1);
  CHECK(ms.masks[0].area() == 5);

  auto line_of = [](const std::string& text) {
    try {
      parse_masks(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("PS3MASK 1\n") == 1);
  CHECK(line_of("PS3MASKS 2\n") == 1);
  CHECK(line_of("PS3MASKS 1\nsize 10\n") == 2);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 1\n0 8 3\nend\n") == 4);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 1\n10 0 1\nend\n") == 4);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 2\n0 0 3\n0 2 2\nend\n") == 5);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 0\nend\n") == 3);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 1\n0 0 x\nend\n") == 4);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nmask 2\n0 0 3\n") == 5);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\nend\nmask 1\n") == 4);
  CHECK(line_of("PS3MASKS 1\nsize 10 10\n") == 3);
}

TEST_CASE("preset boxes") {
  const auto boxes = preset_boxes_fraction(1000, 1000, 0.2);
  REQUIRE(boxes.size() == 75);
  for (std::size_t p = 0; p < 25; ++p) {
    const Box& sq = boxes[3 * p];
    CHECK(sq.width() == doctest::Approx(200));
    CHECK(sq.height() == doctest::Approx(200));
    CHECK(sq.x0 == doctest::Approx(200.0 * static_cast<double>(p % 5)));
    CHECK(sq.y0 == doctest::Approx(200.0 * static_cast<double>(p / 5)));
  }
  // Unclipped variants keep the square's area.
  const auto big = preset_boxes(1000, 1000, 100);
  const Box& sq = big[3 * 12];
  const Box& wide = big[3 * 12 + 1];
  const Box& tall = big[3 * 12 + 2];
  CHECK(std::abs(wide.area() - sq.area()) <= 1.0);
  CHECK(std::abs(tall.area() - sq.area()) <= 1.0);
  CHECK(wide.width() / wide.height() == doctest::Approx(1.5));
  CHECK(tall.height() / tall.width() == doctest::Approx(1.5));
  // Every box is clipped to the image.
  for (const Box& b : preset_boxes_fraction(333, 210, 0.2)) {
    CHECK(b.x0 >= 0);
    CHECK(b.y0 >= 0);
    CHECK(b.x1 <= 333);
    CHECK(b.y1 <= 210);
  }
  const auto tiny = preset_boxes(30, 50, 40);
  REQUIRE(tiny.size() == 1);
  CHECK(tiny[0] == Box{0, 0, 30, 50});
}

TEST_CASE("box saliency examples") {
  MaskSet ms;
  ms.width = ms.height = 100;
  CHECK(box_saliency({0, 0, 50, 50}, ms) == 0.0);
  Mask m;
  for (std::size_t y = 20; y < 30; ++y) m.runs.push_back({y, 20, 10});
  ms.masks.push_back(m);
  CHECK(box_saliency({10, 10, 40, 40}, ms) == doctest::Approx(6.25));
  CHECK(box_saliency({25, 0, 100, 100}, ms) == doctest::Approx(3.125));
  CHECK(box_saliency({50, 50, 100, 100}, ms) == 0.0);
}

TEST_CASE("box saliency matches a pixel-loop evaluation") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t w = 8 + rng() % 57, h = 8 + rng() % 57;
    const MaskSet ms = oracle::random_masks(rng, w, h, rng() % 6);
    const Box b = oracle::random_int_box(rng, w, h);
    CHECK(box_saliency(b, ms) == oracle::box_saliency(b, ms));
  }
}

TEST_CASE("salient box selection") {
  MaskSet ms;
  ms.width = ms.height = 100;
  auto add_blob = [&](std::size_t x, std::size_t y, std::size_t side) {
    Mask m;
    for (std::size_t r = y; r < y + side; ++r) m.runs.push_back({r, x, side});
    ms.masks.push_back(m);
  };
  // Blobs under the 40x40 floor all weigh the same, so saliency counts blobs:
  // three near the origin, two at (60, 5), one at (60, 60).
  add_blob(2, 2, 3);
  add_blob(8, 8, 3);
  add_blob(14, 2, 3);
  add_blob(60, 5, 3);
  add_blob(64, 12, 3);
  add_blob(60, 60, 2);

  SUBCASE("disjoint candidates give plain top-k") {
    const std::vector<Box> c{{0, 0, 20, 20}, {50, 50, 70, 70}, {50, 0, 70, 20}, {80, 80, 100, 100}};
    const auto s = select_salient_boxes(c, ms, 2);
    CHECK(s.indices == std::vector<std::size_t>{0, 2});
    const auto all = select_salient_boxes(c, ms, 10);
    CHECK(all.indices == std::vector<std::size_t>{0, 2, 1, 3});
  }
  SUBCASE("overlapping runner-up is skipped") {
    const std::vector<Box> c{{0, 0, 20, 20}, {2, 2, 22, 22}, {50, 50, 70, 70}, {50, 0, 70, 20}};
    const auto s = select_salient_boxes(c, ms, 2);
    CHECK(s.indices == std::vector<std::size_t>{0, 3});
  }
  SUBCASE("ties go to the lower index") {
    const std::vector<Box> c{{80, 80, 90, 90}, {90, 90, 100, 100}};
    CHECK(select_salient_boxes(c, ms, 1).indices == std::vector<std::size_t>{0});
  }
  CHECK_THROWS_AS(select_salient_boxes({}, ms, 0), ArgumentError);
}

TEST_CASE("greedy selection equals the rank-lexicographic enumeration optimum") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const MaskSet ms = oracle::random_masks(rng, 48, 48, 1 + rng() % 6);
    const std::size_t n = 1 + rng() % 10;
    std::vector<Box> cands;
    for (std::size_t i = 0; i < n; ++i) cands.push_back(oracle::random_int_box(rng, 48, 48));
    const std::size_t k = 1 + rng() % 4;
    const std::vector<std::size_t> expected = oracle::best_disjoint_subset(cands, ms, k);
    const auto got = select_salient_boxes(cands, ms, k);
    CHECK(got.indices == expected);
    for (std::size_t a = 0; a < got.boxes.size(); ++a)
      for (std::size_t b = a + 1; b < got.boxes.size(); ++b) CHECK(got.boxes[a].intersection_area(got.boxes[b]) == 0);
  }
}

TEST_CASE("scene spec validation and json") {
  SceneSpec s;
  CHECK_NOTHROW(s.validate());
  auto field_of = [](SceneSpec spec) {
    try {
      spec.validate();
    } catch (const ConfigError& e) {
      return std::string(e.what()).substr(0, std::string(e.what()).find(':'));
    }
    return std::string();
  };
  SceneSpec big = s;
  big.glyph_side = 8;
  CHECK(field_of(big) == "glyph_side");
  SceneSpec odd = s;
  odd.resolution = 250;
  CHECK(field_of(odd) == "resolution");
  SceneSpec pal = s;
  pal.palette = {0, 1, 2};
  CHECK(field_of(pal) == "palette");
  SceneSpec frac = s;
  frac.document_fraction = 1.5;
  CHECK(field_of(frac) == "document_fraction");

  nlohmann::json j = s;
  SceneSpec back = j.get<SceneSpec>();
  CHECK(nlohmann::json(back) == j);
  try {
    nlohmann::json{{"glyph_count", 3}}.get<SceneSpec>();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("glyph_count", 0) == 0);
  }
  CHECK_THROWS_AS(nlohmann::json({{"seed", "x"}}).get<SceneSpec>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"style", "poster"}}).get<SceneSpec>(), ConfigError);
}

TEST_CASE("synthetic scenes are deterministic") {
  for (SceneStyle style : {SceneStyle::kNatural, SceneStyle::kDocument}) {
    const Scene a = synth_scene(spec_with(42, style));
    const Scene b = synth_scene(spec_with(42, style));
    CHECK(a.image == b.image);
    CHECK(a.record == b.record);
    const Scene c = synth_scene(spec_with(43, style));
    CHECK_FALSE(a.image == c.image);
  }
}

TEST_CASE("captions describe only glyphs inside their boxes") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    for (SceneStyle style : {SceneStyle::kNatural, SceneStyle::kDocument}) {
      const Scene s = synth_scene(spec_with(seed, style));
      const auto& regions = s.record.regions;
      REQUIRE(regions.size() >= 4);
      REQUIRE(regions.size() <= 5);
      CHECK(regions[0].kind == RegionKind::kGlobal);
      CHECK_NOTHROW(validate_record(s.record));
      std::vector<std::size_t> region_color(regions.size());
      for (std::size_t r = 1; r < regions.size(); ++r) {
        const Region& reg = regions[r];
        CHECK(reg.kind == RegionKind::kLocal);
        CHECK(reg.caption.size() <= 16);
        REQUIRE(!reg.caption.empty());
        std::vector<const Glyph*> mine;
        for (const Glyph& g : s.glyphs)
          if (g.region == static_cast<long>(r)) mine.push_back(&g);
        REQUIRE(mine.size() >= 2);
        for (const Glyph* g : mine) {
          CHECK(glyph_inside(*g, reg.box));
          // Glyph pixels carry the region color exactly where the pattern is set.
          const auto& pat = glyph_pattern(g->shape);
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
              const std::uint8_t* p = s.image.pixel(g->x + x, g->y + y);
              const bool colored = Rgb{p[0], p[1], p[2]} == g->color;
              if (pat[y * 4 + x]) CHECK(colored);
            }
        }
        // No other glyph reaches into the box.
        for (const Glyph& g : s.glyphs)
          if (g.region != static_cast<long>(r)) {
            const Box gb{double(g.x), double(g.y), double(g.x + g.side), double(g.y + g.side)};
            CHECK_FALSE(gb.overlaps(reg.box));
          }
        const std::size_t color = reg.caption[0] - vocab::kColorBase;
        region_color[r] = color;
        CHECK(palette()[color] == mine[0]->color);
        if (style == SceneStyle::kNatural) {
          REQUIRE(reg.caption.size() == 3 * mine.size());
          for (std::size_t i = 0; i < mine.size(); ++i) {
            const Glyph& g = *mine[i];
            CHECK(reg.caption[3 * i] == vocab::color(color));
            CHECK(reg.caption[3 * i + 1] == vocab::shape(g.shape));
            const double cx = g.x + 2.0, cy = g.y + 2.0;
            CHECK(reg.caption[3 * i + 2] ==
                  vocab::position(position_word(cx - reg.box.x0, cy - reg.box.y0, reg.box.width(), reg.box.height())));
          }
        } else {
          REQUIRE(reg.caption.size() == 1 + mine.size());
          for (std::size_t i = 0; i < mine.size(); ++i) CHECK(reg.caption[1 + i] == vocab::shape(mine[i]->shape));
        }
      }
      const auto& gc = regions[0].caption;
      REQUIRE(gc.size() == 1 + 2 * (regions.size() - 1));
      CHECK(gc[0] == vocab::kGlobal);
      for (std::size_t r = 1; r < regions.size(); ++r) {
        const Box& b = regions[r].box;
        CHECK(gc[2 * r - 1] == vocab::color(region_color[r]));
        CHECK(gc[2 * r] == vocab::position(position_word((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, 256, 256)));
      }
      for (std::size_t a = 1; a < regions.size(); ++a)
        for (std::size_t b = a + 1; b < regions.size(); ++b) CHECK_FALSE(regions[a].box.overlaps(regions[b].box));
    }
  }
}

TEST_CASE("glyph identity is not recoverable from the low-res image") {
  // Nearest-centroid classifier over a glyph's 3x3 neighborhood, trained on
  // half the glyphs and scored on the rest. At full resolution it separates
  // the shapes; after area downsampling to the low-res side it is at chance.
  struct Sample {
    std::vector<double> low, high;
    std::size_t shape;
  };
  std::vector<Sample> samples;
  for (std::uint64_t seed = 1; samples.size() < 1600; ++seed) {
    const SceneSpec spec = spec_with(seed, seed % 2 ? SceneStyle::kNatural : SceneStyle::kDocument);
    const Scene s = synth_scene(spec);
    const ImageF full = to_float(s.image);
    const ImageF low = resize(full, spec.low_res_side, spec.low_res_side);
    const std::size_t f = spec.resolution / spec.low_res_side;
    for (const Glyph& g : s.glyphs) {
      if (g.region < 0) continue;
      Sample smp;
      smp.shape = g.shape;
      const long lx = static_cast<long>(g.x / f), ly = static_cast<long>(g.y / f);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const std::size_t x = static_cast<std::size_t>(std::clamp(lx + dx, 0L, 63L));
          const std::size_t y = static_cast<std::size_t>(std::clamp(ly + dy, 0L, 63L));
          smp.low.push_back(color_distance(low.pixel(x, y), g.color));
        }
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
          smp.high.push_back(color_distance(full.pixel(g.x + x, g.y + y), g.color));
      samples.push_back(std::move(smp));
    }
  }
  auto accuracy = [&](auto feature) {
    const std::size_t half = samples.size() / 2;
    const std::size_t dim = feature(samples[0]).size();
    std::vector<std::vector<double>> centroid(vocab::kNumShapes, std::vector<double>(dim, 0));
    std::vector<double> count(vocab::kNumShapes, 0);
    for (std::size_t i = 0; i < half; ++i) {
      const auto& v = feature(samples[i]);
      for (std::size_t d = 0; d < dim; ++d) centroid[samples[i].shape][d] += v[d];
      count[samples[i].shape] += 1;
    }
    for (std::size_t k = 0; k < vocab::kNumShapes; ++k)
      for (double& c : centroid[k]) c /= std::max(1.0, count[k]);
    std::size_t correct = 0;
    for (std::size_t i = half; i < samples.size(); ++i) {
      const auto& v = feature(samples[i]);
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < vocab::kNumShapes; ++k) {
        double d = 0;
        for (std::size_t j = 0; j < dim; ++j) d += (v[j] - centroid[k][j]) * (v[j] - centroid[k][j]);
        if (d < best_d) best_d = d, best = k;
      }
      correct += best == samples[i].shape;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size() - half);
  };
  // Features are per-pixel distances to the glyph color, which the caption
  // names; the shape is what has to be recovered.
  const double high = accuracy([](const Sample& s) { return s.high; });
  const double low = accuracy([](const Sample& s) { return s.low; });
  MESSAGE("full-res accuracy " << high << ", low-res accuracy " << low);
  CHECK(high > 0.9);
  CHECK(low < 1.0 / 8 + 0.05);
}

TEST_CASE("pasting onto a larger canvas") {
  SceneSpec spec = spec_with(9, SceneStyle::kNatural);
  spec.resolution = 64;
  spec.low_res_side = 16;
  spec.box_sides = {16, 32};
  spec.min_regions = 1;
  spec.max_regions = 2;
  spec.min_distractors = spec.max_distractors = 0;
  const Scene sample = synth_scene(spec);
  const Rgb bg{10, 200, 30};
  const Scene pasted = paste_at(sample, 256, 32, 32, bg);
  CHECK(pasted.image.width == 256);
  REQUIRE(pasted.record.regions.size() == sample.record.regions.size() - 1);
  for (std::size_t r = 0; r < pasted.record.regions.size(); ++r) {
    CHECK(pasted.record.regions[r].box == sample.record.regions[r + 1].box.translated(32, 32));
    CHECK(pasted.record.regions[r].caption == sample.record.regions[r + 1].caption);
  }
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 256; ++x) {
      const std::uint8_t* p = pasted.image.pixel(x, y);
      if (x >= 32 && x < 96 && y >= 32 && y < 96) {
        const std::uint8_t* q = sample.image.pixel(x - 32, y - 32);
        CHECK((p[0] == q[0] && p[1] == q[1] && p[2] == q[2]));
      } else {
        CHECK((Rgb{p[0], p[1], p[2]} == bg));
      }
    }
  CHECK_NOTHROW(validate_record(pasted.record));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) CHECK_NOTHROW(validate_record(paste_on_background(sample, 100, rng).record));
  CHECK_THROWS_AS(paste_on_background(sample, 63, rng), ArgumentError);
  CHECK_THROWS_AS(paste_at(sample, 100, 40, 0, bg), ArgumentError);
}

TEST_CASE("dataset style mix follows the document fraction") {
  SceneSpec spec;
  for (double f : {0.0, 0.25, 0.5, 1.0}) {
    spec.document_fraction = f;
    std::size_t docs = 0;
    for (std::size_t i = 0; i < 400; ++i) docs += dataset_style(spec, i) == SceneStyle::kDocument;
    CHECK(docs == static_cast<std::size_t>(std::lround(400 * f)));
  }
  CHECK(record_spec(spec, 0).seed != record_spec(spec, 1).seed);
  CHECK(record_spec(spec, 5).seed == record_spec(spec, 5).seed);
}

TEST_CASE("scene masks cover glyph pixels and drive curation toward regions") {
  const Scene s = synth_scene(spec_with(4, SceneStyle::kNatural));
  const MaskSet ms = scene_masks(s);
  REQUIRE(ms.masks.size() == s.glyphs.size());
  for (const Mask& m : ms.masks) CHECK(m.area() == 8);
  CHECK(parse_masks(format_masks(ms)) == ms);
  // Each region box scores above any box of the same size with no glyphs.
  for (std::size_t r = 1; r < s.record.regions.size(); ++r) CHECK(box_saliency(s.record.regions[r].box, ms) > 0);
}

TEST_CASE("dataset write and read round trip") {
  const fs::path dir = temp_dir("dataset_rt");
  std::mt19937 rng(8);
  std::vector<DatasetRecord> written;
  {
    DatasetWriter w(dir);
    for (int i = 0; i < 100; ++i) {
      const std::size_t W = 4 + rng() % 20, H = 4 + rng() % 20;
      Image img(W, H);
      for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng());
      DatasetRecord r;
      r.source = static_cast<SourceTag>(rng() % 3);
      r.regions.push_back({Box{0, 0, double(W), double(H)}, {1, 2, 3}, RegionKind::kGlobal});
      for (std::size_t k = rng() % 4; k > 0; --k) {
        Region g;
        g.box = Box{0.25 * (rng() % 8), 0.5, double(W) - 1.0 / 3, double(H)};
        for (std::size_t t = rng() % 6; t > 0; --t) g.caption.push_back(rng() % 256);
        r.regions.push_back(g);
      }
      written.push_back(w.add(img, r));
    }
    CHECK(w.count() == 100);
  }
  const Dataset ds = read_dataset(dir);
  REQUIRE(ds.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(ds.records[i] == written[i]);
  CHECK(ds.load_image(7).width == written[7].width);
  CHECK(read_dataset(dir / "index.jsonl").size() == 100);

  std::ifstream in(dir / "index.jsonl");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  CHECK(lines.size() == 100);

  auto error_line = [&](const std::string& content) {
    std::ofstream(dir / "index.jsonl", std::ios::trunc) << content;
    try {
      read_dataset(dir);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  std::string truncated;
  for (std::size_t i = 0; i < 60; ++i) truncated += lines[i] + "\n";
  truncated += lines[60].substr(0, lines[60].size() / 2);
  CHECK(error_line(truncated) == 61);

  std::string bad_box;
  for (std::size_t i = 0; i < 10; ++i) {
    std::string l = lines[i];
    if (i == 4) {
      auto j = nlohmann::json::parse(l);
      j["regions"][0]["box"][2] = 1e6;
      l = j.dump();
    }
    bad_box += l + "\n";
  }
  CHECK(error_line(bad_box) == 5);

  std::string bad_kind;
  for (std::size_t i = 0; i < 3; ++i) {
    auto j = nlohmann::json::parse(lines[i]);
    if (i == 2) j["source"] = "scanned";
    bad_kind += j.dump() + "\n";
  }
  CHECK(error_line(bad_kind) == 3);
  fs::remove_all(dir);
}
