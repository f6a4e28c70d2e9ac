#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "ps3/core/image.hpp"
#include "ps3/datagen/dataset.hpp"
#include "ps3/datagen/masks.hpp"
#include "ps3/encoder/checkpoint.hpp"
#include "ps3/encoder/pyramid.hpp"

using namespace ps3;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ps3_test_cli";

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

CliRun cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(PS3_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return p;
}

std::string hash_line(const std::string& out) {
  const auto at = out.find("hash ");
  return at == std::string::npos ? "" : out.substr(at, 21);
}

// Dataset of `n` synthetic records, built once per name.
fs::path dataset(const std::string& name, std::size_t n, int seed = 3) {
  const fs::path dir = fresh(name);
  const CliRun r = cli("synth --count " + std::to_string(n) + " --seed " + std::to_string(seed) + " --out " + dir.string());
  REQUIRE(r.code == 0);
  return dir;
}

fs::path write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kTinyTrain =
    R"({"epochs":1,"samples_per_epoch":12,"batch_size":4,"warmup_steps":1,"eval_records":8,"eval_every":2,"checkpoint_every":2})";

}  // namespace

TEST_CASE("exit codes for usage errors") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("synth --out x").code == 1);  // missing --count
  CHECK(cli("pretrain --data " + (kRoot / "no_such_dir").string() + " --out " + fresh("r0").string()).code == 2);
  CHECK(cli("bench --tokens-only").code == 1);  // neither schedule nor regime
  const CliRun bad = cli("bench --regime sideways --tokens-only");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("constant-cost") != std::string::npos);
}

TEST_CASE("synth is deterministic and mixes styles") {
  const CliRun a = cli("synth --count 20 --seed 9 --out " + fresh("sa").string());
  const CliRun b = cli("synth --count 20 --seed 9 --out " + fresh("sb").string());
  const CliRun c = cli("synth --count 20 --seed 10 --out " + fresh("sc").string());
  REQUIRE(a.code == 0);
  CHECK(hash_line(a.out) == hash_line(b.out));
  CHECK(hash_line(a.out) != hash_line(c.out));
  CHECK(a.out.find("(10 natural, 10 document)") != std::string::npos);
  CHECK(slurp(kRoot / "sa" / "index.jsonl") == slurp(kRoot / "sb" / "index.jsonl"));

  const fs::path spec = write_text(kRoot / "doc_spec.json", R"({"document_fraction": 1.0})");
  const CliRun d = cli("synth --spec " + spec.string() + " --count 6 --out " + fresh("sd").string());
  REQUIRE(d.code == 0);
  CHECK(d.out.find("(0 natural, 6 document)") != std::string::npos);

  const CliRun empty = cli("synth --count 0 --out " + fresh("s0").string());
  REQUIRE(empty.code == 0);
  CHECK(read_dataset(kRoot / "s0").size() == 0);

  const fs::path bad_spec = write_text(kRoot / "bad_spec.json", R"({"document_fraction": 2.0})");
  CHECK(cli("synth --spec " + bad_spec.string() + " --count 2 --out " + fresh("sx").string()).code == 1);
}

TEST_CASE("synth pastes onto a larger canvas") {
  const CliRun r = cli("synth --count 2 --paste-side 512 --out " + fresh("sp").string());
  REQUIRE(r.code == 0);
  const Dataset ds = read_dataset(kRoot / "sp");
  REQUIRE(ds.size() == 2);
  CHECK(ds.records[0].width == 512);
  CHECK(read_ppm(ds.root / ds.records[0].image_path).width == 512);
}

TEST_CASE("curate pairs masks with images and skips bad inputs") {
  const fs::path in = fresh("curate_in");
  fs::create_directories(in);
  Image img(64, 64);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(in / "a.ppm", img);
  write_ppm(in / "b.ppm", img);
  write_ppm(in / "c.ppm", img);
  write_ppm(in / "d.ppm", img);

  MaskSet ms;
  ms.width = ms.height = 64;
  Mask m;
  for (std::size_t y = 40; y < 52; ++y) m.runs.push_back({y, 40, 12});
  ms.masks.push_back(m);
  write_masks(in / "a.masks", ms);
  MaskSet none;
  none.width = none.height = 64;
  write_masks(in / "b.masks", none);
  MaskSet wrong = ms;
  wrong.width = 32;
  wrong.masks.clear();
  write_masks(in / "c.masks", wrong);
  write_text(in / "d.masks", "PS3MASKS 1\nsize 64 64\nmask 1\n3 60 9\nend\n");  // run past the edge

  const fs::path out = fresh("curate_out");
  const CliRun r = cli("curate --masks '" + (in / "*.masks").string() + "' --images '" + (in / "*.ppm").string() +
                    "' --k 2 --fraction 0.25 --out " + out.string());
  REQUIRE(r.code == 0);
  CHECK(r.err.find("c.ppm") != std::string::npos);
  CHECK(r.err.find("d.ppm") != std::string::npos);
  const Dataset ds = read_dataset(out);
  REQUIRE(ds.size() == 2);
  const DatasetRecord& a = ds.records[0];
  CHECK(a.source == SourceTag::kCurated);
  REQUIRE(!a.regions.empty());
  CHECK(a.regions.size() <= 2);
  for (const Region& reg : a.regions) {
    CHECK(reg.kind == RegionKind::kLocal);
    CHECK(reg.caption.empty());
    CHECK(reg.box.intersection_area(Box{40, 40, 52, 52}) > 0);  // zero-score boxes are dropped
  }
  CHECK(ds.records[1].regions.empty());

  const CliRun again = cli("curate --masks '" + (in / "*.masks").string() + "' --images '" + (in / "*.ppm").string() +
                        "' --k 2 --fraction 0.25 --out " + fresh("curate_out2").string());
  CHECK(slurp(out / "index.jsonl") == slurp(kRoot / "curate_out2" / "index.jsonl"));

  const CliRun all_bad = cli("curate --masks '" + (in / "c.masks").string() + "' --images '" + (in / "c.ppm").string() +
                          "' --k 2 --out " + fresh("curate_bad").string());
  CHECK(all_bad.code == 2);
  const CliRun unpaired = cli("curate --masks '" + (in / "z*.masks").string() + "' --images '" + (in / "*.ppm").string() +
                           "' --k 2 --out " + fresh("curate_none").string());
  CHECK(unpaired.code == 2);
}

TEST_CASE("pretrain writes metrics, honors ablations and resumes") {
  const fs::path data = dataset("pt_data", 24);
  const fs::path cfg = write_text(kRoot / "tiny.json", kTinyTrain);

  const fs::path full = fresh("pt_full");
  const CliRun r = cli("pretrain --data " + data.string() + " --config " + cfg.string() + " --seed 4 --out " + full.string());
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(full / "metrics.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  CHECK(line == "step,loss,contrastive,bce,dice,lr,temperature,bias,iou,recall,retrieval");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4);  // step 0 and three training steps
  CHECK(fs::exists(full / "latest.ps3"));

  const fs::path part = fresh("pt_part");
  REQUIRE(cli("pretrain --data " + data.string() + " --config " + cfg.string() + " --seed 4 --max-steps 1 --out " +
              part.string())
              .code == 0);
  REQUIRE(cli("pretrain --data " + data.string() + " --config " + cfg.string() + " --seed 4 --resume --out " +
              part.string())
              .code == 0);
  CHECK(slurp(part / "metrics.csv") == slurp(full / "metrics.csv"));
  CHECK(slurp(part / "latest.ps3") == slurp(full / "latest.ps3"));

  const fs::path abl = fresh("pt_ablate");
  REQUIRE(cli("pretrain --data " + data.string() + " --config " + cfg.string() +
              " --seed 4 --ablate kv-cache --ablate scale-pe --out " + abl.string())
              .code == 0);
  const auto tc = nlohmann::json::parse(slurp(abl / "train_config.json"));
  CHECK(tc["ablate"] == nlohmann::json::array({"scale-pe", "kv-cache"}));
  CHECK(slurp(abl / "metrics.csv") != slurp(full / "metrics.csv"));
  CHECK(cli("pretrain --data " + data.string() + " --ablate wings --out " + fresh("pt_bad").string()).code == 1);

  const fs::path hot = write_text(kRoot / "hot.json", R"({"epochs":1,"samples_per_epoch":8,"batch_size":4,)"
                                                      R"("eval_records":8,"t_prime_init":100})");
  const CliRun nan = cli("pretrain --data " + data.string() + " --config " + hot.string() + " --out " + fresh("pt_nan").string());
  CHECK(nan.code == 3);
}

TEST_CASE("select writes deterministic maps and overlays") {
  const fs::path data = dataset("sel_data", 12);
  const fs::path run = fresh("sel_run");
  const fs::path cfg = write_text(kRoot / "tiny.json", kTinyTrain);
  REQUIRE(cli("pretrain --data " + data.string() + " --config " + cfg.string() + " --max-steps 1 --out " + run.string())
              .code == 0);
  const fs::path ck = run / "latest.ps3";
  const fs::path img = data / "images" / "000000.ppm";

  const fs::path o1 = fresh("sel1"), o2 = fresh("sel2");
  const CliRun a = cli("select --checkpoint " + ck.string() + " --image " + img.string() +
                    " --prompt 'red hbars' --k 40 --pca --out " + o1.string());
  const CliRun b = cli("select --checkpoint " + ck.string() + " --image " + img.string() +
                    " --prompt 'red hbars' --k 40 --pca --out " + o2.string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  for (const char* f : {"heatmap_128.ppm", "heatmap_256.ppm", "overlay_128.ppm", "overlay_256.ppm", "pca_lowres.ppm",
                        "selection.json"}) {
    REQUIRE(fs::exists(o1 / f));
    CHECK(slurp(o1 / f) == slurp(o2 / f));
  }
  const auto sel = nlohmann::json::parse(slurp(o1 / "selection.json"));
  CHECK(sel["total"] == 40);
  std::size_t listed = 0;
  for (const auto& s : sel["scales"]) listed += s["indices"].size();
  CHECK(listed == 40);

  // Selecting everything leaves the overlays equal to the pyramid images.
  const fs::path all = fresh("sel_all");
  REQUIRE(cli("select --checkpoint " + ck.string() + " --image " + img.string() + " --bottom-up --fraction 1 --out " +
              all.string())
              .code == 0);
  const EncoderConfig enc = read_checkpoint(ck).config;
  const ImagePyramid pyr = build_pyramid(read_ppm(img), enc);
  for (std::size_t s = 0; s < pyr.scales.size(); ++s) {
    const Image overlay = read_ppm(all / ("overlay_" + std::to_string(enc.scale_side(s)) + ".ppm"));
    CHECK(overlay == to_u8(pyr.scales[s]));
  }

  const CliRun unknown = cli("select --checkpoint " + ck.string() + " --image " + img.string() +
                          " --prompt 'red zebra' --k 4 --out " + fresh("sel_x").string());
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("hbars") != std::string::npos);
  CHECK(cli("select --checkpoint " + ck.string() + " --image " + img.string() + " --bottom-up --k 100000 --out " +
            fresh("sel_y").string())
            .code == 1);
  CHECK(cli("select --checkpoint " + ck.string() + " --image " + img.string() + " --bottom-up --prompt red --k 4 --out " +
            fresh("sel_z").string())
            .code == 1);
}

TEST_CASE("bench reproduces the paper-profile token counts") {
  const fs::path sched = write_text(
      kRoot / "anchors.json",
      R"({"regime":"whole-image","points":[{"max_res":756},{"max_res":1512}]})");
  const CliRun r = cli("bench --schedule " + sched.string() + " --profile paper --tokens-only --out " +
                    (kRoot / "bench" / "anchors.csv").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("whole-image,756,1,1,2916,729,729,") != std::string::npos);
  CHECK(r.out.find("whole-image,1512,1,1,14580,3645,729,") != std::string::npos);
  CHECK(slurp(kRoot / "bench" / "anchors.csv") == r.out);

  // 15360 of the 87480 cells of the full ladder.
  const fs::path top = write_text(
      kRoot / "top.json",
      R"({"regime":"constant-res","points":[{"max_res":3780,"test_fraction":0.175582990397805213}]})");
  const CliRun t = cli("bench --schedule " + top.string() + " --profile paper --tokens-only");
  REQUIRE(t.code == 0);
  CHECK(t.out.find(",15360,3840,729,") != std::string::npos);
}

TEST_CASE("bench flags missing checkpoints without failing") {
  const fs::path data = dataset("bench_data", 8);
  const CliRun r = cli("bench --regime test-time --checkpoints " + (kRoot / "nowhere").string() + " --data " +
                    data.string() + " --eval-records 8");
  CHECK(r.code == 0);
  CHECK(r.out.find("skipped: missing checkpoint res256_train0.2.ps3") != std::string::npos);
  CHECK(cli("bench --regime test-time --checkpoints " + (kRoot / "nowhere").string()).code == 1);  // no data
  const fs::path broken = write_text(kRoot / "broken.json", "{\"regime\": ");
  CHECK(cli("bench --schedule " + broken.string() + " --tokens-only").code == 1);
}
