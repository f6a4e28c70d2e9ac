#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "ps3/core/grad_check.hpp"
#include "ps3/encoder/checkpoint.hpp"
#include "ps3/encoder/model.hpp"

using namespace ps3;

namespace {

ImageF random_image(std::size_t side, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  ImageF img(side, side);
  for (auto& v : img.rgb) v = u(rng);
  return img;
}

// Small config for cheap tests: 16 px low-res (2x2 grid).
EncoderConfig tiny_config() {
  EncoderConfig c;
  c.low_res_side = 16;
  c.patch_side = 8;
  c.scale_multipliers = {2, 4};
  c.embed_dim = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  c.mlp_dim = 16;
  c.aux_channels = {4, 4, 4};
  c.vocab_size = 32;
  c.text_layers = 1;
  c.text_max_len = 6;
  c.per_round_cap = 20;
  c.seed = 7;
  return c;
}

std::vector<double> values_of(const Var<float>& v) { return {v.value().values.begin(), v.value().values.end()}; }

// Bilinear resample with half-pixel centers, written out independently.
std::vector<double> reference_bilinear(const std::vector<double>& in, std::size_t h, std::size_t w, std::size_t oh,
                                       std::size_t ow) {
  auto coord = [](std::size_t i, std::size_t n, std::size_t o) {
    double c = (i + 0.5) * n / o - 0.5;
    return std::min(std::max(c, 0.0), n - 1.0);
  };
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double cy = coord(y, h, oh), cx = coord(x, w, ow);
      std::size_t y0 = static_cast<std::size_t>(std::floor(cy)), x0 = static_cast<std::size_t>(std::floor(cx));
      std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      double fy = cy - y0, fx = cx - x0;
      out[y * ow + x] = (1 - fy) * ((1 - fx) * in[y0 * w + x0] + fx * in[y0 * w + x1]) +
                        fy * ((1 - fx) * in[y1 * w + x0] + fx * in[y1 * w + x1]);
    }
  return out;
}

}  // namespace

TEST_CASE("config validation and json") {
  EncoderConfig c = desk_profile();
  CHECK_NOTHROW(c.validate());
  CHECK(c.low_res_grid().cells() == 64);
  CHECK(c.scale_grid(0).cells() == 256);
  CHECK(c.scale_grid(1).cells() == 1024);
  CHECK(c.aux_grid_side() == 16);
  CHECK(paper_profile().low_res_grid().cells() == 729);
  CHECK(paper_profile().scale_grid(2).rows == 270);

  EncoderConfig bad = c;
  bad.low_res_side = 60;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.num_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.scale_multipliers = {4, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  nlohmann::json j = c;
  CHECK(j.get<EncoderConfig>() == c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<EncoderConfig>(), ConfigError);

  EncoderConfig t = c.truncated(128);
  CHECK(t.scale_multipliers == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(c.truncated(64), ConfigError);
}

TEST_CASE("pyramid grids") {
  EncoderConfig c = desk_profile();
  ImagePyramid p = build_pyramid(random_image(256, 1), c);
  CHECK(p.low_res.width == 64);
  CHECK(p.scales.size() == 2);
  CHECK(p.grids[0] == GridSpec{16, 16});
  CHECK(p.grids[1] == GridSpec{32, 32});
  CHECK_THROWS_AS(check_pyramid(p, tiny_config()), DimensionError);
}

TEST_CASE("allocate_k") {
  std::vector<GridSpec> paper{{54, 54}, {108, 108}, {270, 270}};
  CHECK(allocate_k(2400, paper) == std::vector<std::size_t>{80, 320, 2000});
  std::vector<GridSpec> desk{{16, 16}, {32, 32}};
  CHECK(allocate_k(320, desk) == std::vector<std::size_t>{64, 256});
  CHECK(allocate_k(1280, desk) == std::vector<std::size_t>{256, 1024});
  CHECK(allocate_k(0, desk) == std::vector<std::size_t>{0, 0});
  CHECK_THROWS_AS(allocate_k(-1, desk), ArgumentError);
  CHECK_THROWS_AS(allocate_k(1281, desk), ArgumentError);
  for (std::int64_t k = 0; k <= 1280; k += 37) {
    auto a = allocate_k(k, desk);
    CHECK(a[0] + a[1] == static_cast<std::size_t>(k));
    // Each share is within one of its exact proportion.
    CHECK(std::abs(static_cast<double>(a[0]) - k * 256.0 / 1280.0) < 1.0);
  }
}

TEST_CASE("select_patches") {
  std::vector<GridSpec> grids{{4, 4}, {8, 8}};
  ScoreMap gt;
  gt.grids = grids;
  gt.provenance = Provenance::kGroundTruth;
  Box box{8, 8, 24, 24};
  std::vector<std::size_t> k;
  for (const auto& g : grids) {
    auto in = cells_in_box(box, 32, 32, g);
    std::vector<double> s(in.begin(), in.end());
    gt.scores.push_back(s);
    k.push_back(static_cast<std::size_t>(std::count(in.begin(), in.end(), true)));
  }
  CHECK(k == std::vector<std::size_t>{4, 16});
  SelectionSet sel = select_patches(gt, k, 100);
  for (std::size_t s = 0; s < 2; ++s) {
    auto in = cells_in_box(box, 32, 32, grids[s]);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i]) want.push_back(i);
    CHECK(sel.indices[s] == want);
  }

  ScoreMap uniform;
  uniform.grids = {{3, 3}};
  uniform.scores = {std::vector<double>(9, 0.2)};
  CHECK(select_patches(uniform, {3}, 10).indices[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(select_patches(uniform, {0}, 10).indices[0].empty());
  CHECK_THROWS_AS(select_patches(uniform, {5}, 4), ArgumentError);

  // Monotone in k.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> val(0, 4);
  ScoreMap r;
  r.grids = {{5, 5}};
  r.scores = {std::vector<double>(25)};
  for (auto& v : r.scores[0]) v = val(rng);
  for (std::size_t kk = 0; kk < 25; ++kk) {
    auto a = select_patches(r, {kk}, 100).indices[0];
    auto b = select_patches(r, {kk + 1}, 100).indices[0];
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST_CASE("cells_in_box uses cell centers") {
  // 4x4 grid over 32 px: centers at 4, 12, 20, 28.
  auto in = cells_in_box(Box{3, 3, 5, 5}, 32, 32, GridSpec{4, 4});
  CHECK(std::count(in.begin(), in.end(), true) == 1);
  CHECK(in[0]);
  auto none = cells_in_box(Box{5, 5, 11, 11}, 32, 32, GridSpec{4, 4});
  CHECK(std::count(none.begin(), none.end(), true) == 0);
  // Half-open: a center on the right edge is outside.
  auto edge = cells_in_box(Box{0, 0, 4, 32}, 32, 32, GridSpec{4, 4});
  CHECK(std::count(edge.begin(), edge.end(), true) == 0);
}

TEST_CASE("plan_rounds") {
  std::vector<GridSpec> grids{{4, 4}, {8, 8}};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  ScoreMap s;
  s.grids = grids;
  for (const auto& g : grids) {
    std::vector<double> v(g.cells());
    for (auto& x : v) x = u(rng);
    s.scores.push_back(v);
  }
  // Within the cap: one round equal to the single-round path.
  auto k = allocate_k(20, grids);
  auto one = plan_rounds(s, k, 20);
  REQUIRE(one.size() == 1);
  CHECK(one[0].indices == select_patches(s, k, 20).indices);

  // cap + m: rounds partition the per-scale top-k, each round the next best.
  k = allocate_k(50, grids);
  auto rounds = plan_rounds(s, k, 20);
  REQUIRE(rounds.size() == 3);
  CHECK(rounds[0].total() == 20);
  CHECK(rounds[1].total() == 20);
  CHECK(rounds[2].total() == 10);
  for (std::size_t sc = 0; sc < 2; ++sc) {
    std::vector<std::size_t> order(grids[sc].cells());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[sc][a] > s.scores[sc][b]; });
    std::size_t at = 0;
    std::set<std::size_t> seen;
    for (const auto& r : rounds) {
      std::set<std::size_t> want(order.begin() + at, order.begin() + at + r.indices[sc].size());
      CHECK(std::set<std::size_t>(r.indices[sc].begin(), r.indices[sc].end()) == want);
      at += r.indices[sc].size();
      for (auto i : r.indices[sc]) CHECK(seen.insert(i).second);
    }
    CHECK(at == k[sc]);
  }
}

TEST_CASE("low-res encoding shapes and cache") {
  EncoderConfig c = desk_profile();
  Ps3Model<float> model(c);
  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  ImagePyramid p = build_pyramid(random_image(256, 2), c);
  auto low = encode_low_res(m, p);
  CHECK(low.tokens.shape() == Shape{64, 64});
  CHECK(low.cache.layers() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(low.cache.keys[l].shape() == Shape{64, 64});
    CHECK(low.cache.values[l].shape() == Shape{64, 64});
  }
  ImagePyramid zero = build_pyramid(ImageF(256, 256, 0.f), c);
  auto z = encode_low_res(m, zero);
  for (float v : z.tokens.value().values) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(encode_low_res(m, build_pyramid(random_image(32, 1), tiny_config())), DimensionError);
}

TEST_CASE("aux encoder") {
  EncoderConfig c = desk_profile();
  Ps3Model<float> model(c);
  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  auto f = aux_highres_encode(m, build_pyramid(random_image(256, 3), c));
  CHECK(f.shape() == Shape{16, 16, 64});
  auto k = aux_highres_encode(m, build_pyramid(ImageF(256, 256, 0.3f), c));
  const auto& v = k.value().values;
  for (std::size_t cell = 1; cell < 256; ++cell)
    for (std::size_t ch = 0; ch < 64; ++ch) REQUIRE(v[cell * 64 + ch] == v[ch]);
}

TEST_CASE("selection_score examples") {
  EncoderConfig c = tiny_config();
  Ps3Model<double> model(c);
  Tape<double> tape;
  Bound<double> m(model, tape, false);
  const std::size_t d = c.embed_dim;
  auto unit = [&](std::size_t axis) {
    Tensor<double> t({1, d});
    t[axis] = 1;
    return t;
  };
  auto rows = [&](std::vector<std::size_t> axes, Shape shape) {
    Tensor<double> t(shape);
    for (std::size_t r = 0; r < axes.size(); ++r) t[r * d + axes[r]] = 1;
    return t;
  };
  std::vector<GridSpec> targets{{4, 4}, {8, 8}};
  auto prompt = tape.constant(unit(0));

  auto same = selection_score(m, tape.constant(rows({0, 0, 0, 0}, {4, d})),
                              tape.constant(rows(std::vector<std::size_t>(9, 0), {3, 3, d})), prompt, targets);
  for (const auto& map : same.maps)
    for (double v : map.value().values) CHECK(v == doctest::Approx(1.0));

  auto orth = selection_score(m, tape.constant(rows({1, 2, 3, 1}, {4, d})),
                              tape.constant(rows(std::vector<std::size_t>(9, 5), {3, 3, d})), prompt, targets);
  for (const auto& map : orth.maps)
    for (double v : map.value().values) CHECK(v == 0.0);

  // Low-res scores [[1,0],[0,0]], aux scores 0: the result is half the bilinear
  // upsample of the low-res map.
  auto mixed = selection_score(m, tape.constant(rows({0, 1, 1, 1}, {4, d})),
                               tape.constant(rows(std::vector<std::size_t>(9, 2), {3, 3, d})), prompt, {{4, 4}});
  auto want = reference_bilinear({1, 0, 0, 0}, 2, 2, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) CHECK(mixed.maps[0].value()[i] == doctest::Approx(0.5 * want[i]).epsilon(1e-12));

  // Zero-norm vectors score 0.
  auto zero = selection_score(m, tape.constant(Tensor<double>({4, d})), tape.constant(Tensor<double>({3, 3, d})),
                              prompt, targets);
  for (const auto& map : zero.maps)
    for (double v : map.value().values) CHECK(v == 0.0);
  ScoreMap sm = mixed.to_score_map();
  CHECK(sm.provenance == Provenance::kPredicted);
  CHECK(sm.scores[0].size() == 16);
}

TEST_CASE("gaussian smoothing keeps range and constants") {
  EncoderConfig c = tiny_config();
  c.smoothing_sigma = 1.0;
  Ps3Model<double> model(c);
  Tape<double> tape;
  Bound<double> m(model, tape, false);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Tensor<double> tok({4, c.embed_dim}), aux({3, 3, c.embed_dim}), pr({1, c.embed_dim});
  for (auto* t : {&tok, &aux, &pr})
    for (auto& v : t->values) v = nd(rng);
  auto s = selection_score(m, tape.constant(tok), tape.constant(aux), tape.constant(pr), {{8, 8}});
  for (double v : s.maps[0].value().values) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  auto taps = gaussian_taps(GridSpec{5, 5}, 0.8);
  for (const auto& t : taps) {
    double tot = 0;
    for (const auto& [i, w] : t) tot += w;
    CHECK(tot == doctest::Approx(1.0));
  }
}

TEST_CASE("scale positional embedding") {
  EncoderConfig c = tiny_config();
  c.scale_multipliers = {3, 9};
  Ps3Model<double> model(c);
  Tape<double> tape;
  Bound<double> m(model, tape, false);
  const std::size_t d = c.embed_dim;
  const auto& low = model.params["pos.low"];
  const auto& off = model.params["pos.scale"];
  // Low-res grid 2x2, x3 grid 6x6: cell 3i+1 has the same center as low-res
  // cell i, so the interpolation lands on a knot.
  SelectionSet knot;
  knot.grids = {{6, 6}, {18, 18}};
  knot.indices = {{4 * 6 + 4}, {}};
  auto pe = scale_positional_embedding(m, knot).value();
  for (std::size_t j = 0; j < d; ++j) CHECK(pe[j] == low.at(1 * 2 + 1, j) + off.at(0, j));

  // Same normalized position: x3 cell (0,0) has center 0.5/6, x9 cell (1,1)
  // has center 1.5/18.
  SelectionSet pair;
  pair.grids = knot.grids;
  pair.indices = {{0}, {1 * 18 + 1}};
  auto pp = scale_positional_embedding(m, pair).value();
  for (std::size_t j = 0; j < d; ++j)
    CHECK(pp[j] - pp[d + j] == doctest::Approx(off.at(0, j) - off.at(1, j)).epsilon(1e-12));

  Ps3Model<double> zeroed = model;
  std::fill(zeroed.params["pos.low"].values.begin(), zeroed.params["pos.low"].values.end(), 0.0);
  Tape<double> t2;
  Bound<double> mz(zeroed, t2, false);
  auto pz = scale_positional_embedding(mz, pair).value();
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(pz[j] == off.at(0, j));
    CHECK(pz[d + j] == off.at(1, j));
  }
}

TEST_CASE("high-res encoding") {
  EncoderConfig c = desk_profile();
  Ps3Model<float> model(c);
  ImageF img = random_image(256, 5);
  ImagePyramid p = build_pyramid(img, c);
  SelectionSet sel;
  sel.grids = p.grids;
  sel.indices = {{3, 40, 41}, {0, 500, 1023}};

  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  auto low = encode_low_res(m, p);
  auto out = encode_high_res(m, p, sel, low.cache);
  CHECK(out.shape() == Shape{6, 64});

  SelectionSet empty;
  empty.grids = p.grids;
  empty.indices = {{}, {}};
  CHECK(encode_high_res(m, p, empty, low.cache).shape() == Shape{0, 64});

  KVCache<float> short_cache = low.cache;
  short_cache.keys.pop_back();
  short_cache.values.pop_back();
  CHECK_THROWS_AS(encode_high_res(m, p, sel, short_cache), ConfigError);

  SUBCASE("low-res content changes the output") {
    ImagePyramid q = p;
    std::mt19937 rng(1);
    std::uniform_int_distribution<std::size_t> pick(0, q.low_res.rgb.size() - 1);
    q.low_res.rgb[pick(rng)] += 0.5f;
    Tape<float> t2(false);
    Bound<float> m2(model, t2, false);
    auto low2 = encode_low_res(m2, q);
    auto out2 = encode_high_res(m2, q, sel, low2.cache);
    double delta = 0;
    for (std::size_t i = 0; i < out.size(); ++i) delta += std::abs(out.value()[i] - out2.value()[i]);
    CHECK(delta > 0);
  }

  SUBCASE("unselected finest-scale pixels do not matter") {
    ImagePyramid q = p;
    auto& fine = q.scales[1];
    std::vector<bool> selected(1024, false);
    for (auto i : sel.indices[1]) selected[i] = true;
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> u(0, 1);
    for (std::size_t y = 0; y < 256; ++y)
      for (std::size_t x = 0; x < 256; ++x)
        if (!selected[(y / 8) * 32 + x / 8])
          for (int ch = 0; ch < 3; ++ch) fine.pixel(x, y)[ch] = u(rng);
    Tape<float> t2(false);
    Bound<float> m2(model, t2, false);
    auto low2 = encode_low_res(m2, q);
    auto out2 = encode_high_res(m2, q, sel, low2.cache);
    CHECK(out2.value().values == out.value().values);
  }
}

TEST_CASE("high-res with zero cache matches a reference forward") {
  EncoderConfig c = tiny_config();
  Ps3Model<double> model(c);
  ImagePyramid p = build_pyramid(random_image(32, 6), c);
  SelectionSet sel;
  sel.grids = p.grids;
  sel.indices = {{5}, {}};
  const std::size_t d = c.embed_dim, n_low = 4, H = c.num_heads, dh = d / H;

  Tape<double> tape;
  Bound<double> m(model, tape, false);
  KVCache<double> zero;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    zero.keys.push_back(tape.constant(Tensor<double>({n_low, d})));
    zero.values.push_back(tape.constant(Tensor<double>({n_low, d})));
  }
  auto got = encode_high_res(m, p, sel, zero).value();

  // Reference: the same single token through plain loops.
  const auto& P = model.params;
  auto matvec = [&](const std::vector<double>& x, const std::string& name) {
    const auto& w = P[name + ".w"];
    const auto& b = P[name + ".b"];
    std::size_t out = w.dim(1);
    std::vector<double> y(b.values.begin(), b.values.end());
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < x.size(); ++i) y[o] += x[i] * w.at(i, o);
    return y;
  };
  auto ln = [&](const std::vector<double>& x, const std::string& name) {
    double mu = std::accumulate(x.begin(), x.end(), 0.0) / x.size(), var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= x.size();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = (x[i] - mu) / std::sqrt(var + 1e-6) * P[name + ".g"][i] + P[name + ".b"][i];
    return y;
  };
  auto gelu_ref = [](double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); };

  Tensor<double> patch = patch_rows<double>(p.scales[0], 8, {5});
  std::vector<double> x = matvec(patch.values, "patch");
  // Cell 5 of the 4x4 grid is (1, 1); on the 2x2 low-res grid its center maps to
  // coordinate (1 + 0.5) * 2 / 4 - 0.5 = 0.25 in both axes.
  const auto& pos = P["pos.low"];
  for (std::size_t j = 0; j < d; ++j) {
    double w00 = 0.75 * 0.75, w01 = 0.75 * 0.25, w10 = 0.25 * 0.75, w11 = 0.25 * 0.25;
    x[j] += w00 * pos.at(0, j) + w01 * pos.at(1, j) + w10 * pos.at(2, j) + w11 * pos.at(3, j) + P["pos.scale"].at(0, j);
  }
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string pre = "vit." + std::to_string(l);
    auto h = ln(x, pre + ".ln1");
    auto q = matvec(h, pre + ".attn.q"), v = matvec(h, pre + ".attn.v");
    std::vector<double> k(d, 0.0);
    for (std::size_t o = 0; o < d; ++o)
      for (std::size_t i = 0; i < d; ++i) k[o] += h[i] * P[pre + ".attn.k.w"].at(i, o);
    std::vector<double> a(d);
    for (std::size_t hd = 0; hd < H; ++hd) {
      double self = 0;
      for (std::size_t i = 0; i < dh; ++i) self += q[hd * dh + i] * k[hd * dh + i];
      self /= std::sqrt(static_cast<double>(dh));
      // n_low zero keys score 0 and carry zero values.
      double mx = std::max(self, 0.0);
      double z = n_low * std::exp(-mx) + std::exp(self - mx);
      double p_self = std::exp(self - mx) / z;
      for (std::size_t i = 0; i < dh; ++i) a[hd * dh + i] = p_self * v[hd * dh + i];
    }
    auto o = matvec(a, pre + ".attn.o");
    for (std::size_t j = 0; j < d; ++j) x[j] += o[j];
    auto f = matvec(ln(x, pre + ".ln2"), pre + ".mlp.fc1");
    for (auto& e : f) e = gelu_ref(e);
    auto f2 = matvec(f, pre + ".mlp.fc2");
    for (std::size_t j = 0; j < d; ++j) x[j] += f2[j];
  }
  x = ln(x, "vit.ln");
  for (std::size_t j = 0; j < d; ++j) CHECK(got[j] == doctest::Approx(x[j]).epsilon(1e-10));
}

TEST_CASE("multi-round encoding") {
  EncoderConfig c = tiny_config();
  Ps3Model<float> model(c);
  ImagePyramid p = build_pyramid(random_image(64, 8), c);
  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  auto low = encode_low_res(m, p);
  auto aux = aux_highres_encode(m, p);
  auto score = selection_score(m, low.tokens, aux, bottom_up_prompt(m), p.grids).to_score_map();

  MultiRoundOutput plan;
  auto single = encode_multi_round(m, p, low, score, 15, &plan);
  REQUIRE(plan.rounds.size() == 1);
  auto direct = encode_high_res(m, p, select_patches(score, allocate_k(15, p.grids), c.per_round_cap), low.cache);
  CHECK(single.value().values == direct.value().values);

  auto multi = encode_multi_round(m, p, low, score, 45, &plan);
  REQUIRE(plan.rounds.size() == 3);
  CHECK(multi.shape() == Shape{45, c.embed_dim});
  // Rows follow (round, scale, index): the first round's rows equal a
  // standalone pass over that round's selection.
  auto r0 = encode_high_res(m, p, plan.rounds[0], low.cache);
  CHECK(std::equal(r0.value().values.begin(), r0.value().values.end(), multi.value().values.begin()));
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& r : plan.rounds)
    for (std::size_t s = 0; s < 2; ++s)
      for (auto i : r.indices[s]) CHECK(cells.insert({s, i}).second);
  CHECK(cells.size() == 45);
}

TEST_CASE("attention pooling") {
  EncoderConfig c = tiny_config();
  Ps3Model<float> model(c);
  std::mt19937 rng(10);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor<float> tok({6, c.embed_dim});
  for (auto& v : tok.values) v = u(rng);

  Tape<float> tape(false);
  Bound<float> m(model, tape, false);
  std::vector<bool> one{false, false, true, false, false, false};
  auto pooled = attention_pool(m, tape.constant(tok), one);
  Tensor<float> row({1, c.embed_dim});
  std::copy(tok.values.begin() + 2 * c.embed_dim, tok.values.begin() + 3 * c.embed_dim, row.values.begin());
  auto vproj = linear(tape.constant(row), m("pool.v.w"), m("pool.v.b"));
  for (std::size_t j = 0; j < c.embed_dim; ++j) CHECK(pooled.value()[j] == doctest::Approx(vproj.value()[j]));

  std::vector<bool> keep{true, false, true, true, false, false};
  auto a = attention_pool(m, tape.constant(tok), keep).value();
  for (std::size_t r : {1, 4, 5})
    for (std::size_t j = 0; j < c.embed_dim; ++j) tok.values[r * c.embed_dim + j] = u(rng) * 50;
  auto b = attention_pool(m, tape.constant(tok), keep).value();
  CHECK(a.values == b.values);

  Tensor<float> same({5, c.embed_dim});
  for (std::size_t r = 0; r < 5; ++r) std::copy(row.values.begin(), row.values.end(), same.values.begin() + r * c.embed_dim);
  auto s = attention_pool(m, tape.constant(same), std::vector<bool>(5, true));
  for (std::size_t j = 0; j < c.embed_dim; ++j) CHECK(s.value()[j] == doctest::Approx(vproj.value()[j]));

  CHECK_THROWS_AS(attention_pool(m, tape.constant(tok), std::vector<bool>(6, false)), ArgumentError);
}

TEST_CASE("text encoder") {
  EncoderConfig c = tiny_config();
  Ps3Model<double> model(c);
  Tape<double> tape;
  Bound<double> m(model, tape, false);
  std::mt19937 rng(12);
  std::uniform_int_distribution<std::size_t> id(0, c.vocab_size - 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> cap(1 + trial % c.text_max_len);
    for (auto& t : cap) t = id(rng);
    auto e = text_encode(m, cap).value();
    double n = 0;
    for (double v : e.values) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1) <= 1e-6);
    CHECK(text_encode(m, cap).value().values == e.values);
  }
  auto a = text_encode(m, {1, 2, 3}).value(), b = text_encode(m, {3, 2, 1}).value();
  CHECK(a.values != b.values);
  CHECK_THROWS_AS(text_encode(m, {}), ArgumentError);
  CHECK_THROWS_AS(text_encode(m, {c.vocab_size}), ArgumentError);
}

TEST_CASE("encoder gradients pass a finite-difference check") {
  EncoderConfig c = desk_profile();
  const Ps3Model<double> model = Ps3Model<float>(c).cast<double>();
  ImagePyramid p = build_pyramid(random_image(256, 13), c);
  SelectionSet sel;
  sel.grids = p.grids;
  sel.indices = {{0, 17, 100}, {5, 6, 700, 1000}};
  std::vector<bool> keep{true, true, false, true, false, true, true};

  ScalarFn fn = [&](Tape<double>&, const std::vector<Var<double>>& leaves) {
    Bound<double> m(c, leaves);
    auto low = encode_low_res(m, p);
    auto aux = aux_highres_encode(m, p);
    auto text = text_encode(m, {3, 9, 27, 81});
    auto score = selection_score(m, low.tokens, aux, text, p.grids);
    auto bu = selection_score(m, low.tokens, aux, bottom_up_prompt(m), p.grids);
    auto hr = encode_high_res(m, p, sel, low.cache);
    auto pooled = l2_normalize(attention_pool(m, hr, keep));
    auto glob = l2_normalize(attention_pool(m, low.tokens, std::vector<bool>(64, true)));
    auto s = sum(mul(pooled, text));
    s = add(s, sum(mul(glob, text)));
    s = add(s, mean(score.maps[0]));
    s = add(s, mean(mul(bu.maps[1], bu.maps[1])));
    return s;
  };
  std::vector<Tensor<double>> params = model.params.tensors();
  GradCheckOptions opt;
  opt.max_coords_per_param = 3;
  opt.seed = 1;
  opt.names = model.params.names();
  auto r = grad_check(fn, params, opt);
  INFO(r.worst);
  CHECK(r.finite);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  EncoderConfig c = tiny_config();
  Ps3Model<float> model(c);
  Checkpoint ck = make_checkpoint(model, {{"train/step", Tensor<float>::scalar(12)}});
  std::string bytes = encode_checkpoint(ck);
  Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.config == c);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.shape == ck.tensors[i].second.shape);
    CHECK(back.tensors[i].second.values == ck.tensors[i].second.values);
  }
  CHECK(encode_checkpoint(back) == bytes);
  Ps3Model<float> loaded = model_from_checkpoint(back);
  CHECK(loaded.params.tensors()[5].values == model.params.tensors()[5].values);
  CHECK(back.find("train/step")->item() == 12);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(decode_checkpoint("garbage!"), DataError);
  ck.tensors.erase(ck.tensors.begin());
  CHECK_THROWS_AS(model_from_checkpoint(ck), DataError);
}
