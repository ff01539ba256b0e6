// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the phantom binary: artifact production, exit codes,
// reproducibility, and agreement with direct library calls.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "phantomdiff/config.hpp"
#include "phantomdiff/dataset.hpp"
#include "phantomdiff/io_formats.hpp"
#include "phantomdiff/metrics.hpp"
#include "phantomdiff/phantom.hpp"
#include "support/test_util.hpp"

using namespace phantomdiff;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(PHANTOM_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("phantomdiff_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).string()] = hash_file(e.path());
    }
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) { atomic_write_file(p, text); }

std::string small_train_config(const std::string& manifest, const std::string& out_dir,
                               double lr = 0.002, int steps = 30) {
  return std::string(R"({
  "schedule": {"kind": "cosine", "T": 25},
  "model": {"kind": "unet", "base_channels": 4, "temb_dim": 16, "width": 32, "height": 32},
  "train": {"batch_size": 2, "steps": )") +
         std::to_string(steps) + R"(, "learning_rate": )" + std::to_string(lr) +
         R"(, "checkpoint_interval": 10},
  "data": {"dataset_manifest": ")" +
         manifest + R"("},
  "seeds": {"master": 5, "train": 6, "sample": 7},
  "output_dir": ")" +
         out_dir + R"("
})";
}

}  // namespace

TEST_CASE("gen produces the declared artifacts and is reproducible") {
  fs::path dir = temp_dir("gen");
  const std::string out1 = (dir / "a").string(), out2 = (dir / "b").string();
  REQUIRE(run("gen --count 2 --size 32 --seed 9 --out " + out1) == 0);
  CHECK(fs::exists(fs::path(out1) / "manifest.json"));
  CHECK(fs::exists(fs::path(out1) / "imgs/phantom_00000.imgf"));
  CHECK(fs::exists(fs::path(out1) / "maps/map_00001.imgf"));
  REQUIRE(run("gen --count 2 --size 32 --seed 9 --out " + out2) == 0);
  CHECK(tree_hashes(out1) == tree_hashes(out2));
  fs::remove_all(dir);
}

TEST_CASE("bad flags and configs yield exit code 2, missing files 4") {
  fs::path dir = temp_dir("codes");
  CHECK(run("gen --count") == 2);              // malformed flags
  CHECK(run("frobnicate") == 2);               // unknown subcommand
  write_text(dir / "bad.json", R"({"schedule": {"T": 0}})");
  CHECK(run("train --config " + (dir / "bad.json").string()) == 2);
  write_text(dir / "ok.json", "{}");
  // Valid config but no dataset manifest for train -> config error.
  CHECK(run("train --config " + (dir / "ok.json").string()) == 2);
  // Missing image file -> io error.
  CHECK(run("export --image " + (dir / "nope.imgf").string() + " --out " + dir.string()) == 4);
  fs::remove_all(dir);
}

TEST_CASE("train writes checkpoint, loss csv, run record; reruns are identical") {
  fs::path dir = temp_dir("train");
  REQUIRE(run("gen --count 3 --size 32 --seed 4 --out " + (dir / "ds").string()) == 0);
  write_text(dir / "cfg.json",
             small_train_config((dir / "ds/manifest.json").string(), (dir / "run").string()));
  REQUIRE(run("train --config " + (dir / "cfg.json").string()) == 0);
  CHECK(fs::exists(dir / "run/checkpoint.dnsr"));
  CHECK(fs::exists(dir / "run/loss.csv"));
  CHECK(fs::exists(dir / "run/run_record.json"));

  std::string csv = read_file_bytes(dir / "run/loss.csv");
  CHECK(csv.rfind("step,loss\n", 0) == 0);

  // Rerun into a second directory: identical checkpoint and loss trace.
  write_text(dir / "cfg2.json",
             small_train_config((dir / "ds/manifest.json").string(), (dir / "run2").string()));
  REQUIRE(run("train --config " + (dir / "cfg2.json").string()) == 0);
  CHECK(hash_file(dir / "run/checkpoint.dnsr") == hash_file(dir / "run2/checkpoint.dnsr"));
  CHECK(hash_file(dir / "run/loss.csv") == hash_file(dir / "run2/loss.csv"));
  fs::remove_all(dir);
}

TEST_CASE("zero learning rate leaves the checkpoint at initialization") {
  fs::path dir = temp_dir("lr0");
  REQUIRE(run("gen --count 2 --size 32 --seed 4 --out " + (dir / "ds").string()) == 0);
  write_text(dir / "a.json", small_train_config((dir / "ds/manifest.json").string(),
                                                (dir / "runa").string(), 0.0, 12));
  write_text(dir / "b.json", small_train_config((dir / "ds/manifest.json").string(),
                                                (dir / "runb").string(), 0.0, 37));
  REQUIRE(run("train --config " + (dir / "a.json").string()) == 0);
  REQUIRE(run("train --config " + (dir / "b.json").string()) == 0);
  // Different step counts, same init, lr = 0: identical checkpoints.
  CHECK(hash_file(dir / "runa/checkpoint.dnsr") == hash_file(dir / "runb/checkpoint.dnsr"));
  fs::remove_all(dir);
}

TEST_CASE("sampling: reduction, guidance collapse, provenance") {
  fs::path dir = temp_dir("sample");
  REQUIRE(run("gen --count 2 --size 32 --seed 14 --out " + (dir / "ds").string()) == 0);
  write_text(dir / "cfg.json",
             small_train_config((dir / "ds/manifest.json").string(), (dir / "run").string()));
  REQUIRE(run("train --config " + (dir / "cfg.json").string()) == 0);
  const std::string cfg = (dir / "cfg.json").string();

  // No guidance vs empty-manifest guidance, same seed: bitwise identical.
  write_text(dir / "empty.json", R"({"conditions": []})");
  REQUIRE(run("sample --config " + cfg + " --count 2 --seed 3 --out " + (dir / "s1").string()) ==
          0);
  REQUIRE(run("sample --config " + cfg + " --count 2 --seed 3 --guidance " +
              (dir / "empty.json").string() + " --out " + (dir / "s2").string()) == 0);
  CHECK(hash_file(dir / "s1/samples/sample_0000.imgf") ==
        hash_file(dir / "s2/samples/sample_0000.imgf"));
  CHECK(hash_file(dir / "s1/samples/sample_0001.imgf") ==
        hash_file(dir / "s2/samples/sample_0001.imgf"));

  // Identity-filter guidance returns the reference exactly.
  ImageGrid ref_hu = read_imgf(dir / "ds/imgs/phantom_00000.imgf");
  write_text(dir / "collapse.json",
             R"({"conditions": [{"image": "ds/imgs/phantom_00000.imgf", "n": 1, "a": 1}]})");
  REQUIRE(run("sample --config " + cfg + " --count 1 --seed 5 --guidance " +
              (dir / "collapse.json").string() + " --out " + (dir / "s3").string()) == 0);
  ImageGrid got = read_imgf(dir / "s3/samples/sample_0000.imgf");
  ImageGrid want_model = normalize_for_model(ref_hu).image;
  ImageGrid want_hu = denormalize_from_model(want_model);
  // f32 storage on both paths; compare at f32 resolution.
  CHECK(max_abs_diff(got, want_hu) <= 1e-3);

  // Provenance sidecars carry the guidance manifest hash.
  std::string prov = read_file_bytes(dir / "s3/samples/sample_0000.json");
  CHECK(prov.find(hash_file(dir / "collapse.json")) != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval agrees with direct library calls and handles self-comparison") {
  fs::path dir = temp_dir("eval");
  REQUIRE(run("gen --count 4 --size 32 --seed 21 --out " + (dir / "ds").string()) == 0);
  const std::string imgs = (dir / "ds/imgs").string();
  REQUIRE(run("eval --generated " + imgs + " --reference " + imgs + " --out " +
              (dir / "report.json").string() + " --extractor-seed 17") == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "report.csv"));

  std::string report = read_file_bytes(dir / "report.json");
  CHECK(report.find("\"set_ssim\": 1.0") != std::string::npos);

  // Library-level recomputation of the same quantities.
  std::vector<ImageGrid> raw, disp;
  for (int i = 0; i < 4; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "phantom_%05d.imgf", i);
    raw.push_back(read_imgf(dir / "ds/imgs" / name));
    disp.push_back(to_window(raw.back(), window_preset("full")));
  }
  CHECK(set_ssim(disp, disp) == 1.0);
  FeatureExtractor ex(17);
  GaussianStats s = extract_stats(raw, ex);
  CHECK(frechet_distance(s, s) <= 1e-6);
  fs::remove_all(dir);
}

TEST_CASE("export writes one pgm per window matching the library bytes") {
  fs::path dir = temp_dir("export");
  auto anatomy = gen_anatomy(3, 32, 32);
  ImageGrid hu = render_phantom(anatomy.map, 12);
  write_imgf(dir / "img.imgf", hu);
  REQUIRE(run("export --image " + (dir / "img.imgf").string() +
              " --windows full,lung,bone,soft-tissue --out " + (dir / "w").string()) == 0);
  // f32 storage quantizes the pixels; the library route must do the same.
  ImageGrid hu_f32 = read_imgf(dir / "img.imgf");
  for (const auto& preset : standard_windows()) {
    fs::path p = dir / "w" / ("img_" + preset.name + ".pgm");
    REQUIRE(fs::exists(p));
    CHECK(read_file_bytes(p) == pgm_bytes(to_window(hu_f32, preset)));
  }
  fs::remove_all(dir);
}

TEST_CASE("export golden bytes for a fixed input") {
  const fs::path data = fs::path(PHANTOMDIFF_TEST_DATA_DIR);
  fs::path dir = temp_dir("export_golden");
  // Fixed 4x2 HU image with known window mappings.
  ImageGrid img(4, 2, ValueRange::Hu, {-1000, -500, 0, 500, 1000, 50, -600, 400});
  write_imgf(dir / "fixed.imgf", img);
  REQUIRE(run("export --image " + (dir / "fixed.imgf").string() + " --windows full --out " +
              dir.string()) == 0);
  CHECK(read_file_bytes(dir / "fixed_full.pgm") ==
        read_file_bytes(data / "golden_fixed_full.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("schedule dump and inspect") {
  fs::path dir = temp_dir("sched");
  REQUIRE(run("schedule --kind linear --T 100 --out " + (dir / "s.vsch").string()) == 0);
  VarianceSchedule s = read_vsch(dir / "s.vsch");
  CHECK(s.steps() == 100);
  CHECK(s.kind() == ScheduleKind::Linear);
  CHECK(run("schedule --inspect " + (dir / "s.vsch").string()) == 0);
  fs::remove_all(dir);
}
